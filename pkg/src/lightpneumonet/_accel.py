"""Numba availability and the switch between compiled and numpy kernels.

Set ``LPN_DISABLE_NUMBA=1`` to force the pure-numpy path.
"""
import os
import warnings

_FLAG = os.environ.get("LPN_DISABLE_NUMBA", "").strip().lower()

# numba probes for TBB at import and warns when the system copy is too old;
# the fallback threading layers are fine for batch-level parallelism.
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


if HAS_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def max_threads():
    if not HAS_NUMBA:
        return 1
    return int(numba.config.NUMBA_NUM_THREADS)


def set_threads(n):
    """Cap kernel parallelism at ``n`` workers; returns the value applied.

    Requests beyond the pool size numba was started with are clamped.
    """
    if n is None or not HAS_NUMBA:
        return None
    n = max(1, min(int(n), max_threads()))
    numba.set_num_threads(n)
    return n


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

"""Tensor helpers.

Tensors are plain C-contiguous ``numpy.ndarray`` values in row-major,
channel-last (NHWC) layout. ``float32`` is used for training and ``float64``
for verification; the helpers here validate shapes and keep that convention.
"""
import numpy as np

from .errors import NumericError, ShapeError

SINGLE = np.float32
DOUBLE = np.float64

_PRECISIONS = {"single": SINGLE, "double": DOUBLE}


def as_dtype(precision):
    """Map ``'single'``/``'double'`` (or a numpy dtype) to a numpy dtype."""
    if isinstance(precision, str):
        try:
            return np.dtype(_PRECISIONS[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    return np.dtype(precision)


def check_shape(dims):
    dims = tuple(int(d) for d in dims)
    if not dims:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in dims):
        raise ShapeError(f"every dimension must be >= 1, got {dims}")
    return dims


def tensor_create(dims, fill=0.0, precision="single"):
    dims = check_shape(dims)
    return np.full(dims, fill, dtype=as_dtype(precision))


def tensor_reshape(t, dims):
    """Return ``t`` with a new shape; the element sequence is unchanged."""
    dims = check_shape(dims)
    if int(np.prod(dims)) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} ({t.size} elements) to {dims}")
    return np.ascontiguousarray(t).reshape(dims)


def flatten_hwc(t):
    """Flatten an ``[H, W, C]`` map so index ``(h*W + w)*C + c`` holds ``t[h, w, c]``."""
    if t.ndim != 3:
        raise ShapeError(f"flatten_hwc expects a rank-3 tensor, got shape {t.shape}")
    return np.ascontiguousarray(t).reshape(-1)


def flatten_batch(t):
    """Per-sample ``flatten_hwc`` over an ``[N, H, W, C]`` batch."""
    if t.ndim != 4:
        raise ShapeError(f"flatten_batch expects a rank-4 tensor, got shape {t.shape}")
    return np.ascontiguousarray(t).reshape(t.shape[0], -1)


def require_finite(t, what="tensor"):
    if not np.all(np.isfinite(t)):
        raise NumericError(f"{what} contains NaN or Inf")
    return t

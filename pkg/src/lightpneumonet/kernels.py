"""Backend dispatch for the batch kernels.

The compiled path is used unless numba is missing or ``LPN_DISABLE_NUMBA``
is set before import.
"""
from . import kernels_numpy
from ._accel import USE_NUMBA, backend_name

if USE_NUMBA:
    from . import kernels_numba as _impl
else:
    _impl = kernels_numpy

BACKEND = backend_name()

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward


def get_backend(name):
    """Return the kernel module for ``'numba'`` or ``'numpy'``."""
    if name == "numpy":
        return kernels_numpy
    if name == "numba":
        from . import kernels_numba

        return kernels_numba
    raise ValueError(f"unknown kernel backend {name!r}")

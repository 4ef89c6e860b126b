"""Layer forward/backward operations.

Each function accepts a single sample (``[H, W, C]`` or ``[n]``) or a batch
with a leading sample axis, and returns the same rank it was given.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, ShapeError


@dataclass
class ConvLayer:
    kernel: np.ndarray  # [kh, kw, cin, cout]
    bias: np.ndarray  # [cout]

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise ShapeError(f"conv kernel must be rank 4, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[3],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match cout={self.kernel.shape[3]}"
            )


@dataclass(frozen=True)
class MaxPoolSpec:
    pool_h: int
    pool_w: int = None

    def __post_init__(self):
        if self.pool_w is None:
            object.__setattr__(self, "pool_w", self.pool_h)
        if self.pool_h < 1 or self.pool_w < 1:
            raise ConfigError("pool size must be positive")


@dataclass
class DenseLayer:
    weights: np.ndarray  # [n_in, n_out]
    bias: np.ndarray  # [n_out]

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"inconsistent dense shapes {self.weights.shape} / {self.bias.shape}"
            )


@dataclass(frozen=True)
class DropoutSpec:
    rate: float
    mode: str = "train"

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.mode not in ("train", "infer"):
            raise ConfigError(f"dropout mode must be 'train' or 'infer', got {self.mode!r}")


@dataclass
class LayerGradients:
    d_input: np.ndarray
    d_params: list = field(default_factory=list)


@dataclass
class PoolIndex:
    """Winning flat spatial index (``row*W + col``) per pooled output."""

    indices: np.ndarray
    input_shape: tuple


def _batched(x, rank):
    """Add a leading sample axis when ``x`` is a single sample."""
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected rank {rank} or {rank + 1} input, got shape {x.shape}")


def _unbatch(t, single):
    return t[0] if single else t


def conv2d_forward(x, layer):
    xb, single = _batched(x, 3)
    kh, kw, cin, _ = layer.kernel.shape
    _, h, w, c = xb.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels, kernel expects {cin}")
    if h < kh or w < kw:
        raise ShapeError(f"input {h}x{w} is smaller than the {kh}x{kw} kernel")
    xb = np.ascontiguousarray(xb)
    out = kernels.conv2d_forward(xb, layer.kernel, layer.bias)
    return _unbatch(out, single)


def conv2d_backward(x, layer, d_out, need_input_grad=True):
    xb, single = _batched(x, 3)
    db_, _ = _batched(d_out, 3)
    kh, kw, cin, cout = layer.kernel.shape
    expected = (xb.shape[0], xb.shape[1] - kh + 1, xb.shape[2] - kw + 1, cout)
    if db_.shape != expected:
        raise ShapeError(f"d_out shape {db_.shape} does not match forward output {expected}")
    dx, dk, dbias = kernels.conv2d_backward(
        np.ascontiguousarray(xb), layer.kernel, np.ascontiguousarray(db_), need_input_grad
    )
    if dx is not None:
        dx = _unbatch(dx, single)
    return LayerGradients(dx, [dk, dbias])


def maxpool_forward(x, spec):
    xb, single = _batched(x, 3)
    _, h, w, _ = xb.shape
    if h < spec.pool_h or w < spec.pool_w:
        raise ShapeError(f"input {h}x{w} is smaller than the {spec.pool_h}x{spec.pool_w} pool")
    out, arg = kernels.maxpool_forward(np.ascontiguousarray(xb), spec.pool_h, spec.pool_w)
    index = PoolIndex(_unbatch(arg, single), tuple(x.shape))
    return _unbatch(out, single), index


def maxpool_backward(index, d_out):
    if d_out.shape != index.indices.shape:
        raise ShapeError(
            f"d_out shape {d_out.shape} does not match pooled shape {index.indices.shape}"
        )
    arg, single = _batched(index.indices, 3)
    dob, _ = _batched(d_out, 3)
    h, w = index.input_shape[-3], index.input_shape[-2]
    dx = kernels.maxpool_backward(arg, np.ascontiguousarray(dob), h, w)
    return _unbatch(dx, single)


def dense_forward(x, layer):
    xb, single = _batched(x, 1)
    if xb.shape[1] != layer.weights.shape[0]:
        raise ShapeError(
            f"input length {xb.shape[1]} does not match dense n_in={layer.weights.shape[0]}"
        )
    out = kernels.dense_forward(np.ascontiguousarray(xb), layer.weights, layer.bias)
    return _unbatch(out, single)


def dense_backward(x, layer, d_out):
    xb, single = _batched(x, 1)
    dob, _ = _batched(d_out, 1)
    n_in, n_out = layer.weights.shape
    if xb.shape[1] != n_in or dob.shape != (xb.shape[0], n_out):
        raise ShapeError(
            f"dense backward shapes x={x.shape}, d_out={d_out.shape} "
            f"inconsistent with weights {layer.weights.shape}"
        )
    dx, dw, dbias = kernels.dense_backward(
        np.ascontiguousarray(xb), layer.weights, np.ascontiguousarray(dob)
    )
    return LayerGradients(_unbatch(dx, single), [dw, dbias])


def relu_forward(x):
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def relu_backward(x, d_out):
    """Pass ``d_out`` where ``x > 0``; the derivative at exactly zero is zero."""
    if x.shape != d_out.shape:
        raise ShapeError(f"relu backward shape mismatch {x.shape} vs {d_out.shape}")
    return np.where(x > 0, d_out, 0).astype(d_out.dtype, copy=False)


def relu(x, direction="forward", d_out=None):
    if direction == "forward":
        return relu_forward(x)
    if direction == "backward":
        if d_out is None:
            raise ValueError("relu backward needs d_out")
        return relu_backward(x, d_out)
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def softmax(z):
    """Row-wise softmax over the last axis with max subtraction."""
    if z.shape[-1] < 1:
        raise ShapeError("softmax needs at least one logit")
    if np.isnan(z).any():
        raise NumericError("softmax input contains NaN")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def dropout(x, spec, rng=None):
    """Inverted dropout.

    ``rng`` is a ``numpy.random.Generator`` for the whole tensor, or a
    sequence with one generator per sample along axis 0 so each sample's
    mask depends only on its own stream.

    Returns ``(output, keep_mask)``.
    """
    if spec.mode == "infer" or spec.rate == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    if rng is None:
        raise ValueError("train-mode dropout needs an rng stream")
    keep_p = 1.0 - spec.rate
    if isinstance(rng, np.random.Generator):
        mask = rng.random(x.shape) < keep_p
    else:
        if len(rng) != x.shape[0]:
            raise ShapeError(f"{len(rng)} rng streams for {x.shape[0]} samples")
        mask = np.stack([g.random(x.shape[1:]) < keep_p for g in rng])
    scale = x.dtype.type(1.0 / keep_p)
    return x * mask * scale, mask


def dropout_backward(d_out, mask, spec):
    if spec.mode == "infer" or spec.rate == 0.0:
        return d_out
    scale = d_out.dtype.type(1.0 / (1.0 - spec.rate))
    return d_out * mask * scale

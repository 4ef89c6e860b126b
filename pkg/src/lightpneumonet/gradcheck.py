"""Finite-difference verification of ``model_backward``."""
from dataclasses import dataclass

import numpy as np

from . import ops, rng as rngmod
from .model import (
    Conv,
    Dense,
    Flatten,
    MaxPool,
    build_reduced,
    init_params,
    model_backward,
    model_forward,
    param_shapes,
)
from .optim import WeightedCrossEntropySpec, weighted_ce_loss


@dataclass
class GroupResult:
    name: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    groups: list
    tolerance: float

    @property
    def passed(self):
        return all(g.passed for g in self.groups)

    @property
    def max_rel_error(self):
        return max(g.max_rel_error for g in self.groups)


def relative_error(analytic, numeric, floor=1e-12):
    """``||a - n|| / max(||a||, ||n||)``; zero when both norms are below ``floor``."""
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < floor:
        return 0.0
    return float(diff / scale)


def central_difference(f, theta, step=1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. ``theta``, perturbed in place."""
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * step)
    return grad


def kink_margin(params, spec, batch):
    """Smallest distance of the forward pass from a non-differentiable point.

    That is the minimum over every ReLU pre-activation ``|z|`` and, for
    pooling windows with a positive maximum, the gap between the largest and
    second-largest value. Ties among zeros are harmless: with the ReLU margin
    held, those inputs stay exactly zero under perturbation. A ReLU layer
    with no positive unit reports zero margin: every gradient upstream of it
    vanishes, so comparing it would be vacuous.
    """
    margin = np.inf
    x = batch
    for layer in spec.layers:
        if isinstance(layer, Conv):
            conv = ops.ConvLayer(params[f"{layer.name}/kernel"], params[f"{layer.name}/bias"])
            z = ops.conv2d_forward(x, conv)
            margin = min(margin, np.abs(z).min() if (z > 0).any() else 0.0)
            x = ops.relu_forward(z)
        elif isinstance(layer, MaxPool):
            p = layer.pool
            n, h, w, c = x.shape
            ho, wo = (h - p) // p + 1, (w - p) // p + 1
            win = x[:, : ho * p, : wo * p, :].reshape(n, ho, p, wo, p, c)
            win = np.sort(win.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, p * p), axis=-1)
            live = win[..., -1] > 0
            if p * p > 1 and live.any():
                margin = min(margin, (win[..., -1] - win[..., -2])[live].min())
            x = win[..., -1]
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            dense = ops.DenseLayer(params[f"{layer.name}/weights"], params[f"{layer.name}/bias"])
            z = ops.dense_forward(x, dense)
            if layer.activation == "relu":
                margin = min(margin, np.abs(z).min() if (z > 0).any() else 0.0)
                z = ops.relu_forward(z)
            x = z
    return float(margin)


def make_problem(spec, seed, batch_size=2, min_margin=1e-4, max_attempts=200):
    """Seeded double-precision params, inputs and alternating one-hot targets.

    Draws are repeated (deterministically, from the same seed) until the
    forward pass keeps ``min_margin`` clear of every ReLU and pooling kink,
    so a finite-difference step cannot cross one.
    """
    targets = np.zeros((batch_size, 2))
    targets[np.arange(batch_size), np.arange(batch_size) % 2] = 1.0
    for attempt in range(max_attempts):
        g = rngmod.stream(seed, rngmod.GRADCHECK, attempt)
        params = init_params(spec, int(g.integers(2**31)), precision="double")
        # nonzero biases move pre-activations off the exact-zero kink
        for name, _ in param_shapes(spec):
            if name.endswith("/bias"):
                params[name] = g.uniform(-0.1, 0.1, size=params[name].shape)
        batch = g.uniform(0.0, 1.0, size=(batch_size,) + tuple(spec.input_shape))
        if kink_margin(params, spec, batch) >= min_margin:
            return params, batch, targets
    raise RuntimeError(f"no kink-free problem found in {max_attempts} attempts")


def gradient_check(
    spec=None,
    seed=0,
    tolerance=1e-5,
    step=1e-5,
    batch_size=2,
    loss_spec=WeightedCrossEntropySpec(),
    problem=None,
    backward=model_backward,
):
    """Compare backprop with central differences of the full weighted loss.

    Dropout runs in train mode with per-sample streams that are re-created
    for every evaluation, so the mask is identical across perturbations.
    ``backward`` is injectable so tests can confirm a broken gradient fails.
    """
    spec = spec or build_reduced()
    params, batch, targets = problem or make_problem(spec, seed, batch_size)

    def streams():
        return [rngmod.dropout_stream(seed, 0, i) for i in range(batch.shape[0])]

    def loss_value():
        probs, _ = model_forward(params, spec, batch, mode="train", rng=streams())
        return weighted_ce_loss(probs, targets, loss_spec)[0]

    probs, cache = model_forward(params, spec, batch, mode="train", rng=streams())
    _, d_logits = weighted_ce_loss(probs, targets, loss_spec)
    analytic = backward(cache, d_logits)

    results = {}
    for name, _ in param_shapes(spec):
        numeric = central_difference(loss_value, params[name], step)
        layer = name.split("/")[0]
        err = relative_error(analytic[name], numeric)
        results.setdefault(layer, []).append((analytic[name], numeric, err))

    groups = []
    for layer, parts in results.items():
        a = np.concatenate([p[0].ravel() for p in parts])
        n = np.concatenate([p[1].ravel() for p in parts])
        err = relative_error(a, n)
        groups.append(GroupResult(layer, err, err <= tolerance))
    return GradCheckReport(groups, tolerance)

"""Class-weighted categorical cross-entropy and the Adam optimizer."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericError, ShapeError

DEFAULT_CLASS_WEIGHTS = (2.0, 1.2)  # NORMAL, PNEUMONIA
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class WeightedCrossEntropySpec:
    class_weights: tuple = DEFAULT_CLASS_WEIGHTS
    # "weight_sum" divides by the summed sample weights, "batch_size" by N
    normalization: str = "weight_sum"

    def __post_init__(self):
        if any(w <= 0 for w in self.class_weights):
            raise ConfigError("class weights must be positive")
        if self.normalization not in ("weight_sum", "batch_size"):
            raise ConfigError(f"unknown loss normalization {self.normalization!r}")


def target_classes(targets):
    """Class index per row of a one-hot target matrix."""
    t = np.asarray(targets)
    if t.ndim != 2:
        raise InputError(f"targets must be [N, K], got shape {t.shape}")
    ones = t == 1
    if not (np.all(ones | (t == 0)) and np.all(ones.sum(axis=1) == 1)):
        raise InputError("every target row must be one-hot")
    return ones.argmax(axis=1)


def per_sample_losses(probs, targets, spec=WeightedCrossEntropySpec()):
    """Return ``(losses, weights, labels)`` for a batch, unnormalized."""
    if probs.shape != targets.shape:
        raise ShapeError(f"probs {probs.shape} and targets {targets.shape} differ")
    labels = target_classes(targets)
    if labels.max(initial=0) >= len(spec.class_weights):
        raise InputError("target class has no configured weight")
    picked = probs[np.arange(len(labels)), labels].astype(np.float64)
    losses = -np.log(np.maximum(picked, LOG_CLAMP))
    weights = np.asarray(spec.class_weights, dtype=np.float64)[labels]
    return losses, weights, labels


def weighted_ce_loss(probs, targets, spec=WeightedCrossEntropySpec()):
    """Weighted cross-entropy and its gradient w.r.t. the pre-softmax logits.

    Row sums of ``probs`` are checked to 1e-5. The gradient is the fused
    softmax/cross-entropy form ``w_n * (p_n - y_n) / norm``.
    """
    if probs.ndim != 2:
        raise ShapeError(f"probs must be [N, K], got {probs.shape}")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-5):
        raise InputError("probability rows must sum to 1")
    losses, weights, _ = per_sample_losses(probs, targets, spec)
    norm = weights.sum() if spec.normalization == "weight_sum" else float(len(weights))
    loss = float(np.dot(weights, losses) / norm)
    scale = (weights / norm).astype(probs.dtype)[:, None]
    d_logits = scale * (probs - targets.astype(probs.dtype))
    return loss, d_logits


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    weight_decay: float = 1e-5
    # "decoupled": theta *= (1 - lr*wd) after the step; "l2": g += wd*theta
    decay_mode: str = "decoupled"
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.decay_mode not in ("decoupled", "l2"):
            raise ConfigError(f"unknown weight decay mode {self.decay_mode!r}")
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ConfigError("invalid Adam hyperparameters")


def adam_step(params, grads, state):
    """Apply one Adam update to ``params`` (a name -> array dict) in place.

    Returns ``(params, state)`` for convenience.
    """
    for name, g in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"{name}: non-finite gradient")

    state.t += 1
    t = state.t
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        theta = params[name]
        dt = theta.dtype.type
        if state.decay_mode == "l2" and state.weight_decay:
            g = g + dt(state.weight_decay) * theta
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= dt(state.beta1)
        m += dt(1.0 - state.beta1) * g
        v *= dt(state.beta2)
        v += dt(1.0 - state.beta2) * (g * g)
        m_hat = m / dt(bc1)
        v_hat = v / dt(bc2)
        theta -= dt(state.lr) * m_hat / (np.sqrt(v_hat) + dt(state.epsilon))
        if state.decay_mode == "decoupled" and state.weight_decay:
            theta *= dt(1.0 - state.lr * state.weight_decay)
    return params, state

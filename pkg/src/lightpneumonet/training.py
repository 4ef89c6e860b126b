"""Training loop, early stopping and held-out evaluation."""
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import rng as rngmod
from .checkpoint import save_weights
from .data import PreprocessConfig, decode_image, make_batch, one_hot, preprocess
from .errors import ConfigError, DatasetError, DecodeError, NumericError
from .metrics import ConfusionMatrix, metrics_from_confusion
from .model import model_backward, model_forward
from .optim import AdamState, WeightedCrossEntropySpec, adam_step, per_sample_losses, weighted_ce_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    batch_size: int = 4
    patience: int = 5
    class_weights: tuple = (2.0, 1.2)
    seed: int = 42
    monitor: str = "loss"
    lr: float = 1e-4
    weight_decay: float = 1e-5
    decay_mode: str = "decoupled"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    loss_normalization: str = "weight_sum"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.monitor != "loss":
            raise ConfigError("only the training loss can be monitored")

    def loss_spec(self):
        return WeightedCrossEntropySpec(tuple(self.class_weights), self.loss_normalization)

    def adam_state(self):
        return AdamState(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            weight_decay=self.weight_decay,
            decay_mode=self.decay_mode,
        )


@dataclass
class EarlyStopState:
    patience: int = 5
    best_loss: float = math.inf
    epochs_since_improvement: int = 0


def early_stop_update(state, epoch_loss):
    """Record one epoch's loss; returns ``(state, stop, improved)``.

    Only a strict decrease counts as improvement.
    """
    if not math.isfinite(epoch_loss):
        raise NumericError(f"non-finite epoch loss {epoch_loss!r}")
    improved = epoch_loss < state.best_loss
    if improved:
        state.best_loss = epoch_loss
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
    return state, state.epochs_since_improvement >= state.patience, improved


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    seconds: float = field(compare=False)


class TrainResult(NamedTuple):
    params: dict
    best_checkpoint: str
    history: list


def preprocess_config_for(spec, base=PreprocessConfig()):
    return replace(base, target_size=tuple(spec.input_shape[:2]))


class _ImageCache:
    """Memoizes unaugmented preprocessed images; augmented batches bypass it."""

    def __init__(self, manifest, cfg, dtype):
        self.manifest = manifest
        self.cfg = cfg
        self.dtype = dtype
        self.images = {}

    def batch(self, indices):
        missing = [i for i in indices if i not in self.images]
        if missing:
            imgs, _ = make_batch(self.manifest, missing, cfg=self.cfg, dtype=self.dtype)
            self.images.update(zip(missing, imgs))
        labels = one_hot([self.manifest.records[i].label for i in indices], dtype=self.dtype)
        return np.stack([self.images[i] for i in indices]), labels


def _dump_diagnostics(out_dir, payload):
    if out_dir is None:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "diagnostic.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return path


def train(params, spec, manifest, config=TrainConfig(), augment=None, out_dir=None,
          preprocess_cfg=PreprocessConfig(), on_epoch=None):
    """Train ``params`` in place with Adam on ``manifest``.

    Randomness (shuffle order, augmentation, dropout) comes from counter
    streams keyed by ``(config.seed, epoch, sample index)``. When ``out_dir``
    is given, ``best.lpnw`` is rewritten on each improvement and
    ``final.lpnw`` at the end.
    """
    if len(manifest) == 0:
        raise DatasetError("training manifest is empty")
    dtype = next(iter(params.values())).dtype
    cfg = preprocess_config_for(spec, preprocess_cfg)
    loss_spec = config.loss_spec()
    state = config.adam_state()
    stopper = EarlyStopState(config.patience)
    cache = None if augment is not None else _ImageCache(manifest, cfg, dtype)
    best_path = os.path.join(out_dir, "best.lpnw") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    history = []
    n = len(manifest)
    seed = config.seed

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rngmod.shuffle_stream(seed, epoch).permutation(n)
        weighted, weights, correct = [], [], 0
        for start in range(0, n, config.batch_size):
            idx = [int(i) for i in order[start:start + config.batch_size]]
            if cache is not None:
                x, y = cache.batch(idx)
            else:
                streams = [rngmod.augment_stream(seed, epoch, i) for i in idx]
                x, y = make_batch(manifest, idx, augment, streams, cfg, dtype)
            drop = [rngmod.dropout_stream(seed, epoch, i) for i in idx]
            losses = None
            try:
                probs, fwd = model_forward(params, spec, x, mode="train", rng=drop)
                losses, w, labels = per_sample_losses(probs, y, loss_spec)
                if not np.all(np.isfinite(probs)) or not np.all(np.isfinite(losses)):
                    raise NumericError("non-finite loss")
                _, d_logits = weighted_ce_loss(probs, y, loss_spec)
                adam_step(params, model_backward(fwd, d_logits), state)
            except NumericError as exc:
                path = _dump_diagnostics(out_dir, {
                    "error": str(exc),
                    "epoch": epoch,
                    "batch_indices": idx,
                    "paths": [manifest.records[i].path for i in idx],
                    "losses": None if losses is None else [float(v) for v in losses],
                    "adam_step": state.t,
                    "param_max_abs": {k: float(np.max(np.abs(v))) for k, v in params.items()},
                })
                raise NumericError(
                    f"{exc} at epoch {epoch}, samples {idx}"
                    + (f"; diagnostics in {path}" if path else "")
                ) from exc
            weighted.extend(w * losses)
            weights.extend(w)
            correct += int(np.sum(probs.argmax(axis=1) == labels))

        denom = math.fsum(weights) if loss_spec.normalization == "weight_sum" else float(n)
        epoch_loss = math.fsum(weighted) / denom
        stats = EpochStats(epoch, epoch_loss, correct / n, time.perf_counter() - t0)
        history.append(stats)
        log.info("epoch %d loss %.6f acc %.4f (%.1fs)", epoch, stats.loss, stats.accuracy, stats.seconds)
        if on_epoch is not None:
            on_epoch(stats)
        try:
            stopper, stop, improved = early_stop_update(stopper, epoch_loss)
        except NumericError:
            _dump_diagnostics(out_dir, {"epoch": epoch, "epoch_loss": repr(epoch_loss)})
            raise
        if improved and best_path:
            save_weights(params, best_path)
        if stop:
            log.info("early stop after epoch %d (best loss %.6f)", epoch, stopper.best_loss)
            break

    if out_dir:
        save_weights(params, os.path.join(out_dir, "final.lpnw"))
    return TrainResult(params, best_path, history)


@dataclass(frozen=True)
class Prediction:
    path: str
    label: int
    predicted: int
    probabilities: tuple


@dataclass
class EvalResult:
    confusion: ConfusionMatrix
    metrics: object
    predictions: list
    failures: list

    def __iter__(self):
        return iter((self.confusion, self.metrics, self.predictions))


def predict_images(params, spec, images, batch_size=4):
    """Infer-mode probabilities for a stack of preprocessed images."""
    dtype = next(iter(params.values())).dtype
    out = []
    for start in range(0, len(images), batch_size):
        x = np.ascontiguousarray(images[start:start + batch_size], dtype=dtype)
        probs, _ = model_forward(params, spec, x, mode="infer")
        out.append(probs)
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=dtype)


def evaluate(params, spec, manifest, batch_size=4, preprocess_cfg=PreprocessConfig()):
    """Infer-mode evaluation without augmentation.

    Undecodable files are listed in ``failures`` and skipped.
    """
    if len(manifest) == 0:
        raise DatasetError("evaluation manifest is empty")
    cfg = preprocess_config_for(spec, preprocess_cfg)
    records, failures, prob_chunks = [], [], []
    pending, pending_recs = [], []

    def flush():
        if pending:
            prob_chunks.append(predict_images(params, spec, np.stack(pending), batch_size))
            records.extend(pending_recs)
            pending.clear()
            pending_recs.clear()

    for rec in manifest.records:
        try:
            img = decode_image(rec.path)
        except DecodeError as exc:
            log.warning("skipping %s", exc)
            failures.append((rec.path, str(exc)))
            continue
        pending.append(preprocess(img, cfg))
        pending_recs.append(rec)
        if len(pending) == batch_size:
            flush()
    flush()
    if not records:
        raise DatasetError("no image in the manifest could be decoded")
    probs = np.concatenate(prob_chunks)
    predicted = probs.argmax(axis=1)
    labels = [r.label for r in records]
    cm = ConfusionMatrix.from_labels(labels, predicted)
    preds = [
        Prediction(r.path, r.label, int(p), tuple(float(v) for v in pr))
        for r, p, pr in zip(records, predicted, probs)
    ]
    return EvalResult(cm, metrics_from_confusion(cm), preds, failures)

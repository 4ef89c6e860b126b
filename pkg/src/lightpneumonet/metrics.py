"""Confusion matrix, derived metrics and report files.

The positive class is PNEUMONIA (label 1).
"""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

HISTORY_FIELDS = ("epoch", "loss", "accuracy", "seconds")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InputError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_labels(cls, labels, predictions, positive=1):
        y = np.asarray(labels) == positive
        p = np.asarray(predictions) == positive
        if y.shape != p.shape:
            raise InputError("labels and predictions differ in length")
        return cls(
            tp=int(np.sum(y & p)),
            fp=int(np.sum(~y & p)),
            fn=int(np.sum(y & ~p)),
            tn=int(np.sum(~y & ~p)),
        )


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    zero_division: tuple = field(default_factory=tuple)

    def as_dict(self, digits=6):
        return {k: round(getattr(self, k), digits) for k in ("accuracy", "precision", "recall", "f1")}


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics_from_confusion(cm):
    """Accuracy, precision, recall and F1; a zero denominator gives 0 and a flag."""
    if cm.total == 0:
        raise InputError("cannot compute metrics on an empty confusion matrix")
    flags = []
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    return MetricsReport(accuracy, precision, recall, f1, tuple(flags))


def _check_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc.strerror}") from exc


def emit_reports(cm, metrics, stats, out_dir):
    """Write ``metrics.json``, ``confusion.csv`` and ``history.csv`` into ``out_dir``.

    Any of the three inputs may be ``None`` to skip its file. Returns the
    written paths.
    """
    _check_dir(out_dir)
    written = []
    try:
        if metrics is not None:
            path = os.path.join(out_dir, "metrics.json")
            with open(path, "w") as fh:
                json.dump(metrics.as_dict(6), fh, indent=2)
                fh.write("\n")
            written.append(path)
        if cm is not None:
            path = os.path.join(out_dir, "confusion.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["true\\pred", "NORMAL", "PNEUMONIA"])
                w.writerow(["NORMAL", cm.tn, cm.fp])
                w.writerow(["PNEUMONIA", cm.fn, cm.tp])
            written.append(path)
        if stats is not None:
            path = os.path.join(out_dir, "history.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(HISTORY_FIELDS)
                for s in stats:
                    w.writerow([s.epoch, repr(s.loss), repr(s.accuracy), f"{s.seconds:.3f}"])
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write reports to {out_dir}: {exc.strerror}") from exc
    return written

import csv
import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightpneumonet.errors import InputError
from lightpneumonet.metrics import ConfusionMatrix, emit_reports, metrics_from_confusion
from lightpneumonet.training import EpochStats

TABLE2 = {"accuracy": 94.23, "precision": 91.94, "recall": 99.49, "f1": 95.57}


def integer_search(total, targets):
    """All (tp, fp, fn, tn) on ``total`` samples whose metrics round to ``targets`` (percent, 2 d.p.)."""
    hits = []
    fp = np.arange(total + 1)
    for tp in range(1, total + 1):
        for fn in range(0, total - tp + 1):
            if abs(100 * tp / (tp + fn) - targets["recall"]) > 0.005:
                continue
            f = fp[: total - tp - fn + 1]
            tn = total - tp - fn - f
            precision = tp / (tp + f)
            recall = tp / (tp + fn)
            acc = 100 * (tp + tn) / total
            f1 = 100 * 2 * precision * recall / (precision + recall)
            ok = ((np.abs(acc - targets["accuracy"]) <= 0.005)
                  & (np.abs(100 * precision - targets["precision"]) <= 0.005)
                  & (np.abs(f1 - targets["f1"]) <= 0.005))
            hits += [(tp, int(x), fn, int(total - tp - fn - x)) for x in f[ok]]
    return hits


def test_integer_search_pins_the_fixture():
    assert integer_search(624, TABLE2) == [(388, 34, 2, 200)]


def test_table2_metrics():
    m = metrics_from_confusion(ConfusionMatrix(tp=388, fp=34, fn=2, tn=200))
    assert round(100 * m.accuracy, 2) == 94.23
    assert round(100 * m.precision, 2) == 91.94
    assert round(100 * m.recall, 2) == 99.49
    assert round(100 * m.f1, 2) == 95.57
    assert (round(m.accuracy, 4), round(m.precision, 4), round(m.recall, 4), round(m.f1, 4)) == (
        0.9423, 0.9194, 0.9949, 0.9557)
    assert m.zero_division == ()


def test_from_labels_counting():
    cm = ConfusionMatrix.from_labels([1, 1, 0], [1, 0, 0])
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (1, 0, 1, 1)
    with pytest.raises(InputError):
        ConfusionMatrix.from_labels([1, 0], [1])


def test_perfect_and_all_positive():
    m = metrics_from_confusion(ConfusionMatrix(tp=390, fp=0, fn=0, tn=234))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)
    m = metrics_from_confusion(ConfusionMatrix.from_labels([0, 1] * 5, [1] * 10))
    assert m.recall == 1.0 and m.precision == 0.5


def test_zero_division_flags():
    m = metrics_from_confusion(ConfusionMatrix(tp=0, fp=3, fn=0, tn=5))
    assert m.recall == 0.0 and "recall" in m.zero_division
    assert m.f1 == 0.0 and "f1" in m.zero_division
    m = metrics_from_confusion(ConfusionMatrix(tp=0, fp=0, fn=2, tn=5))
    assert m.precision == 0.0 and "precision" in m.zero_division
    with pytest.raises(InputError):
        metrics_from_confusion(ConfusionMatrix(0, 0, 0, 0))
    with pytest.raises(InputError):
        ConfusionMatrix(-1, 0, 0, 0)


counts = st.integers(0, 500)


@given(counts, counts, counts, counts, st.integers(1, 20))
def test_metric_identities(tp, fp, fn, tn, k):
    if tp + fp + fn + tn == 0:
        return
    cm = ConfusionMatrix(tp, fp, fn, tn)
    m = metrics_from_confusion(cm)
    assert m.accuracy == (tp + tn) / cm.total
    if m.precision + m.recall > 0:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
    s = metrics_from_confusion(ConfusionMatrix(k * tp, k * fp, k * fn, k * tn))
    for name in ("accuracy", "precision", "recall", "f1"):
        assert getattr(s, name) == pytest.approx(getattr(m, name), rel=1e-12, abs=1e-15)
    assert all(0.0 <= getattr(m, n) <= 1.0 for n in ("accuracy", "precision", "recall", "f1"))


def test_emit_reports(tmp_path):
    cm = ConfusionMatrix(388, 34, 2, 200)
    stats = [EpochStats(1, 0.5, 0.75, 1.23456), EpochStats(2, 0.25, 1.0, 2.0)]
    written = emit_reports(cm, metrics_from_confusion(cm), stats, tmp_path)
    assert sorted(os.path.basename(p) for p in written) == ["confusion.csv", "history.csv", "metrics.json"]
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics == {"accuracy": 0.942308, "precision": 0.919431, "recall": 0.994872, "f1": 0.955665}
    rows = list(csv.reader(open(tmp_path / "confusion.csv")))
    assert rows == [["true\\pred", "NORMAL", "PNEUMONIA"], ["NORMAL", "200", "34"], ["PNEUMONIA", "2", "388"]]
    hist = list(csv.reader(open(tmp_path / "history.csv")))
    assert hist[0] == ["epoch", "loss", "accuracy", "seconds"]
    assert hist[1] == ["1", "0.5", "0.75", "1.235"]


def test_empty_history_is_header_only(tmp_path):
    emit_reports(None, None, [], tmp_path)
    assert (tmp_path / "history.csv").read_text().strip() == "epoch,loss,accuracy,seconds"
    assert not (tmp_path / "metrics.json").exists()


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_reports(ConfusionMatrix(1, 0, 0, 1), None, None, blocker / "sub")

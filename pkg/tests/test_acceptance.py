"""Acceptance criteria, one check each.

Every check prints a single ``PASS``/``FAIL`` line with its measured
runtime, whether run under pytest or directly::

    python3 -m pytest tests/test_acceptance.py -v
    python3 tests/test_acceptance.py

The extended full-dataset criterion runs only when ``LPN_KERMANY_ROOT``
points at the dataset (and ``LPN_RUN_EXTENDED=1`` is set); it is not a gate.
"""
import io
import json
import os
import subprocess
import sys
import tempfile
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from _helpers import conv_oracle, numeric_grad, pool_oracle, rel_err, separable_dataset  # noqa: E402
from lightpneumonet import cli, ops  # noqa: E402
from lightpneumonet._accel import HAS_NUMBA  # noqa: E402
from lightpneumonet.augment import AugmentationConfig, apply_affine, sample_affine_params  # noqa: E402
from lightpneumonet.checkpoint import decode, encode, load_weights, save_weights  # noqa: E402
from lightpneumonet.data import load_manifest, make_batch, preprocess  # noqa: E402
from lightpneumonet.errors import BadMagicError, ChecksumError, TruncatedCheckpointError  # noqa: E402
from lightpneumonet.gradcheck import gradient_check  # noqa: E402
from lightpneumonet.kernels import get_backend  # noqa: E402
from lightpneumonet.metrics import ConfusionMatrix, metrics_from_confusion  # noqa: E402
from lightpneumonet.model import build_lightpneumonet, build_mini, count_params, init_params, shape_trace  # noqa: E402
from lightpneumonet.optim import weighted_ce_loss  # noqa: E402
from lightpneumonet.training import TrainConfig, train  # noqa: E402
from test_metrics import TABLE2, integer_search  # noqa: E402

BACKENDS = ["numpy"] + (["numba"] if HAS_NUMBA else [])


def check_parameter_count():
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(["inspect"])
    out = buf.getvalue()
    ok = (code == 0 and "Trainable params: 388,082 (1.48 MiB)" in out
          and "Memory at 4 bytes/param: 1,552,328 bytes" in out)
    return ok, "388,082 params, 1,552,328 bytes" if ok else out[-200:]


def check_shape_trace():
    trace = shape_trace(build_lightpneumonet())
    spatial = [shape[0] for _, shape in trace[1:13]]
    expected = [220, 216, 72, 68, 64, 21, 19, 17, 8, 6, 4, 2]
    names = [n for n, _ in trace[1:14]]
    ok = spatial == expected and trace[13] == ("flatten", (512,)) and names[-1] == "flatten"
    return ok, "224->" + "->".join(map(str, spatial)) + f", flatten {trace[13][1][0]}"


def check_per_layer_counts():
    expected = {
        "conv1_1": 416, "conv1_2": 6416, "conv2_1": 12832, "conv2_2": 25632,
        "conv3_1": 18496, "conv3_2": 36928, "conv4_1": 73856, "conv4_2": 147584,
        "dense1": 65664, "dense2": 258,
    }
    counts = count_params(build_lightpneumonet())
    ok = counts.per_layer == expected and counts.total == sum(expected.values()) == 388_082
    return ok, f"10 layers, sum {counts.total:,}"


def _layer_kernel_errors(seed):
    """Max relative error of each layer kernel against central differences."""
    rng = np.random.default_rng(seed)
    errs = {}

    x = rng.standard_normal((6, 6, 2))
    layer = ops.ConvLayer(rng.standard_normal((3, 3, 2, 3)), rng.standard_normal(3))
    w = rng.standard_normal((4, 4, 3))
    f = lambda: float(np.sum(ops.conv2d_forward(x, layer) * w))
    g = ops.conv2d_backward(x, layer, w)
    errs["conv"] = max(rel_err(g.d_input, numeric_grad(f, x)),
                       rel_err(g.d_params[0], numeric_grad(f, layer.kernel)),
                       rel_err(g.d_params[1], numeric_grad(f, layer.bias)))

    xp = rng.permutation(72).astype(np.float64).reshape(6, 6, 2) / 7.0
    wp = rng.standard_normal((2, 2, 2))
    spec = ops.MaxPoolSpec(3)
    f = lambda: float(np.sum(ops.maxpool_forward(xp, spec)[0] * wp))
    errs["maxpool"] = rel_err(ops.maxpool_backward(ops.maxpool_forward(xp, spec)[1], wp), numeric_grad(f, xp))

    xd = rng.standard_normal((3, 7))
    dense = ops.DenseLayer(rng.standard_normal((7, 4)), rng.standard_normal(4))
    wd = rng.standard_normal((3, 4))
    f = lambda: float(np.sum(ops.dense_forward(xd, dense) * wd))
    g = ops.dense_backward(xd, dense, wd)
    errs["dense"] = max(rel_err(g.d_input, numeric_grad(f, xd)),
                        rel_err(g.d_params[0], numeric_grad(f, dense.weights)),
                        rel_err(g.d_params[1], numeric_grad(f, dense.bias)))

    xr = rng.uniform(1e-3, 1.0, 40) * rng.choice([-1.0, 1.0], 40)
    wr = rng.standard_normal(40)
    errs["relu"] = rel_err(ops.relu_backward(xr, wr), numeric_grad(lambda: float(np.sum(ops.relu_forward(xr) * wr)), xr))

    logits = rng.standard_normal((5, 2))
    targets = np.eye(2)[rng.integers(0, 2, 5)]
    f = lambda: weighted_ce_loss(ops.softmax(logits), targets)[0]
    errs["softmax+loss"] = rel_err(weighted_ce_loss(ops.softmax(logits), targets)[1], numeric_grad(f, logits))
    return errs


def check_gradients():
    worst = 0.0
    for seed in (0, 1, 2):
        worst = max(worst, max(_layer_kernel_errors(seed).values()))
        report = gradient_check(seed=seed, tolerance=1e-5)
        if not report.passed:
            return False, f"reduced model seed {seed}: {report.max_rel_error:.2e}"
        worst = max(worst, report.max_rel_error)
    return worst <= 1e-5, f"max rel err {worst:.2e} over 5 kernels + reduced model, seeds 0-2"


def check_kernel_oracles():
    rng = np.random.default_rng(20240607)
    mismatches = 0
    for _ in range(50):
        h, w = rng.integers(4, 17, 2)
        cin, cout = rng.integers(1, 5, 2)
        kh, kw = rng.integers(1, 4, 2)
        p = int(rng.integers(2, 4))
        x = rng.standard_normal((h, w, cin))
        k = rng.standard_normal((kh, kw, cin, cout))
        b = rng.standard_normal(cout)
        xi = rng.integers(-3, 4, (h, w, cin)).astype(np.float64)  # integer values force ties
        ref_conv = conv_oracle(x, k, b)
        ref_pool, ref_arg = pool_oracle(xi, p)
        for name in BACKENDS:
            mod = get_backend(name)
            out = mod.conv2d_forward(x[None], k, b)[0]
            pooled, arg = mod.maxpool_forward(xi[None], p, p)
            mismatches += int(not np.array_equal(out, ref_conv))
            mismatches += int(not (np.array_equal(pooled[0], ref_pool) and np.array_equal(arg[0], ref_arg)))
    return mismatches == 0, f"50 instances x {len(BACKENDS)} backends, {mismatches} mismatches"


def check_metrics_fixture():
    hits = integer_search(624, TABLE2)
    if hits != [(388, 34, 2, 200)]:
        return False, f"integer search found {hits}"
    m = metrics_from_confusion(ConfusionMatrix(*hits[0]))
    got = tuple(round(100 * v, 2) for v in (m.accuracy, m.precision, m.recall, m.f1))
    return got == (94.23, 91.94, 99.49, 95.57), f"unique (388,34,2,200) -> {got}"


def check_overfit():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = load_manifest(separable_dataset(tmp), "train")
        spec = build_mini()
        runs = [train(init_params(spec, 0), spec, manifest, TrainConfig(max_epochs=200, seed=0)).history
                for _ in range(2)]
    h = runs[0]
    hit = next((s.epoch for s in h if s.accuracy == 1.0 and s.loss < 0.01), None)
    same = runs[0] == runs[1]
    return hit is not None and same, f"8/8 and loss<0.01 at epoch {hit}; repeat identical: {same}"


def _cli_train(tmp, root, name, threads):
    out = os.path.join(tmp, name)
    cfg = os.path.join(tmp, name + ".json")
    with open(cfg, "w") as fh:
        json.dump({"dataset_root": root, "out_dir": out, "architecture": "mini",
                   "target_size": [20, 20], "max_epochs": 5, "seed": 42}, fh)
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    proc = subprocess.run([sys.executable, "-m", "lightpneumonet.cli", "train", "-c", cfg,
                           "--threads", str(threads)], env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    with open(os.path.join(out, "history.csv")) as fh:
        losses = [row.split(",")[1] for row in fh.read().splitlines()[1:]]
    blobs = []
    for name in ("best.lpnw", "final.lpnw"):
        with open(os.path.join(out, name), "rb") as fh:
            blobs.append(fh.read())
    return losses, blobs


def check_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        root = separable_dataset(os.path.join(tmp, "data"))
        runs = [_cli_train(tmp, root, f"run{i}", t) for i, t in enumerate((1, 4, 2))]
    same = all(r == runs[0] for r in runs[1:])
    return same, f"3 runs (--threads 1/4/2, augmentation on), {len(runs[0][0])} epochs, identical: {same}"


def check_serialization():
    params = init_params(build_lightpneumonet(), 5)
    with tempfile.TemporaryDirectory() as tmp:
        a = save_weights(params, os.path.join(tmp, "a.lpnw"))
        b = save_weights(load_weights(a), os.path.join(tmp, "b.lpnw"))
        with open(a, "rb") as fa, open(b, "rb") as fb:
            identical = fa.read() == fb.read()
    data = encode(params)
    crc = bytearray(data)
    crc[len(data) // 2] ^= 0x01
    raised = []
    for blob, err in ((b"XXXX" + data[4:], BadMagicError), (data[:-100], TruncatedCheckpointError),
                      (bytes(crc), ChecksumError)):
        try:
            decode(blob)
            raised.append(None)
        except Exception as exc:  # noqa: BLE001 - we record whatever type surfaces
            raised.append(type(exc))
    expected = [BadMagicError, TruncatedCheckpointError, ChecksumError]
    ok = identical and raised == expected
    return ok, f"byte-identical: {identical}; errors: {[e.__name__ if e else None for e in raised]}"


def check_pipeline_invariants():
    cfg = AugmentationConfig()
    rng = np.random.default_rng(7)
    const_ok = True
    for value in (0.0, 0.3, 1.0, 0.77):
        img = np.full((224, 224, 1), value)
        for _ in range(10):
            const_ok &= bool(np.all(apply_affine(img, sample_affine_params(cfg, rng)) == value))
    range_ok = True
    for _ in range(20):
        raw = rng.integers(0, 256, tuple(rng.integers(16, 300, 2)) + (int(rng.choice([1, 3])),)).astype(np.uint8)
        out = preprocess(raw, affine=sample_affine_params(cfg, rng))
        range_ok &= bool(out.min() >= 0.0 and out.max() <= 1.0)
    with tempfile.TemporaryDirectory() as tmp:
        m = load_manifest(separable_dataset(tmp), "train")
        x, _ = make_batch(m, range(8))
        range_ok &= bool(x.min() >= 0.0 and x.max() <= 1.0)
    draws = [sample_affine_params(cfg, rng) for _ in range(10_000)]
    lim = 0.15 * 224
    bounds = {"theta": 12, "zx": None, "zy": None, "tx": lim, "ty": lim, "shear": 0.15}
    param_ok = True
    for name, b in bounds.items():
        v = np.array([getattr(d, name) for d in draws])
        if b is None:
            param_ok &= bool(v.min() >= 0.85 and v.max() <= 1.15)
        else:
            param_ok &= bool(np.abs(v).max() <= b)
    ok = const_ok and range_ok and param_ok
    return ok, f"constant kept: {const_ok}; pixels in [0,1]: {range_ok}; 10^4 draws in range: {param_ok}"


CRITERIA = [
    ("parameter count", check_parameter_count, 1.0),
    ("shape trace", check_shape_trace, 1.0),
    ("per-layer counts", check_per_layer_counts, 1.0),
    ("gradient checks", check_gradients, 60.0),
    ("conv/pool oracle equivalence", check_kernel_oracles, 30.0),
    ("metrics fixture", check_metrics_fixture, 1.0),
    ("overfit sanity", check_overfit, 300.0),
    ("determinism", check_determinism, 600.0),
    ("serialization", check_serialization, 5.0),
    ("pipeline invariants", check_pipeline_invariants, 30.0),
]


def evaluate_criterion(name, fn, budget):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001 - a crash is a failed criterion
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    within = elapsed <= budget
    line = (f"{'PASS' if ok and within else 'FAIL'}  {name}: {detail} "
            f"[{elapsed:.2f}s / budget {budget:g}s]")
    return ok and within, line


@pytest.mark.parametrize("name,fn,budget", CRITERIA, ids=[c[0].replace(" ", "_") for c in CRITERIA])
def test_criterion(name, fn, budget, capsys):
    ok, line = evaluate_criterion(name, fn, budget)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_extended_full_dataset(capsys):
    """Non-gating: full default training on the real dataset, recall >= 0.95."""
    root = os.environ.get("LPN_KERMANY_ROOT")
    if not root or os.environ.get("LPN_RUN_EXTENDED") != "1":
        with capsys.disabled():
            print("\nSKIP  extended full-dataset run (non-gating): set LPN_KERMANY_ROOT and LPN_RUN_EXTENDED=1")
        pytest.skip("dataset not supplied")
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "cfg.json")
        with open(cfg, "w") as fh:
            json.dump({"dataset_root": root, "out_dir": tmp}, fh)
        assert cli.main(["train", "-c", cfg]) == 0
        assert cli.main(["evaluate", "-c", cfg, "-m", os.path.join(tmp, "best.lpnw")]) == 0
        with open(os.path.join(tmp, "metrics.json")) as fh:
            recall = json.load(fh)["recall"]
    with capsys.disabled():
        print(f"\n{'PASS' if recall >= 0.95 else 'FAIL'}  extended full-dataset run: recall {recall:.4f}")
    assert recall >= 0.95


if __name__ == "__main__":
    results = [evaluate_criterion(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)

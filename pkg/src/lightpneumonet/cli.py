"""``lpn`` command-line interface.

Exit codes: 0 ok, 1 numeric failure during training, 2 config, 3 dataset,
4 checkpoint, 5 no predictions, 6 gradient check failed.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import _accel
from .checkpoint import load_weights
from .config import load_config
from .data import CLASS_NAMES, PreprocessConfig, decode_image, load_manifest, preprocess
from .errors import (
    ArchitectureError,
    CheckpointFormatError,
    ConfigError,
    DatasetError,
    DecodeError,
    NumericError,
)
from .gradcheck import gradient_check
from .metrics import emit_reports
from .model import (
    Conv,
    Dense,
    Dropout,
    MaxPool,
    build_spec,
    count_params,
    init_params,
    shape_trace,
    spec_for_params,
)
from .training import evaluate, predict_images, preprocess_config_for, train

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_CHECKPOINT = 4
EXIT_NO_PREDICTIONS = 5
EXIT_GRADCHECK = 6

log = logging.getLogger("lightpneumonet")


def _layer_label(layer):
    if isinstance(layer, Conv):
        return f"{layer.name} (Conv2D {layer.kernel}x{layer.kernel})"
    if isinstance(layer, MaxPool):
        return f"{layer.name} (MaxPool {layer.pool}x{layer.pool})"
    if isinstance(layer, Dense):
        return f"{layer.name} (Dense, {layer.activation})"
    if isinstance(layer, Dropout):
        return f"{layer.name} (Dropout {layer.rate})"
    return f"{layer.name} (Flatten)"


def format_architecture(spec):
    counts = count_params(spec)
    rows = [("input", str(tuple(spec.input_shape)), "0")]
    for layer, (_, shape) in zip(spec.layers, shape_trace(spec)[1:]):
        n = counts.per_layer.get(layer.name, 0)
        rows.append((_layer_label(layer), str(shape), f"{n:,}"))
    w0 = max(len(r[0]) for r in rows) + 2
    w1 = max(len(r[1]) for r in rows) + 2
    lines = [f"Model: {spec.name}", f"{'Layer':<{w0}}{'Output shape':<{w1}}Params"]
    lines.append("-" * (w0 + w1 + 10))
    lines += [f"{a:<{w0}}{b:<{w1}}{c}" for a, b, c in rows]
    lines.append("=" * (w0 + w1 + 10))
    nbytes = counts.nbytes(4)
    lines.append(f"Trainable params: {counts.total:,} ({nbytes / 2**20:.2f} MiB)")
    lines.append(f"Memory at 4 bytes/param: {nbytes:,} bytes")
    return "\n".join(lines)


def cmd_inspect(args):
    spec = build_spec(args.architecture)
    print(format_architecture(spec))
    return EXIT_OK


def cmd_config(args):
    cfg = load_config(args.config)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args):
    spec = build_spec(args.architecture)
    ok = True
    for seed in args.seeds:
        report = gradient_check(spec, seed=seed, tolerance=args.tolerance)
        print(f"seed {seed}")
        print(f"  {'group':<10}{'max rel err':>14}  result")
        for g in report.groups:
            print(f"  {g.name:<10}{g.max_rel_error:>14.3e}  {'PASS' if g.passed else 'FAIL'}")
        ok = ok and report.passed
    print("gradient check " + ("passed" if ok else "FAILED") + f" (tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_train(args):
    cfg = load_config(args.config)
    _apply_threads(args, cfg)
    spec = cfg.model_spec()
    manifest = load_manifest(cfg.dataset_root, "train")
    print(f"training {spec.name} on {len(manifest)} images "
          f"({', '.join(f'{k}={v}' for k, v in manifest.class_counts.items())}), "
          f"kernels: {_accel.backend_name()}")
    params = init_params(spec, cfg.seed)

    def report(s):
        print(f"epoch {s.epoch:3d}  loss {s.loss:.6f}  acc {s.accuracy:.4f}  {s.seconds:.1f}s",
              flush=True)

    result = train(params, spec, manifest, cfg.train_config(), cfg.augmentation_config(),
                   out_dir=cfg.out_dir, preprocess_cfg=cfg.preprocess_config(), on_epoch=report)
    emit_reports(None, None, result.history, cfg.out_dir)
    print(f"best checkpoint: {result.best_checkpoint}")
    return EXIT_OK


def _load_checkpoint(path, spec=None):
    try:
        params = load_weights(path, spec)
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    if spec is None:
        try:
            spec = spec_for_params(params)
        except ArchitectureError as exc:
            raise CheckpointFormatError(f"{path}: {exc}") from None
    return params, spec


def cmd_evaluate(args):
    cfg = load_config(args.config)
    _apply_threads(args, cfg)
    params, spec = _load_checkpoint(args.model, cfg.model_spec())
    manifest = load_manifest(cfg.dataset_root, args.split)
    result = evaluate(params, spec, manifest, cfg.batch_size, cfg.preprocess_config())
    for path, msg in result.failures:
        print(f"warning: {msg}", file=sys.stderr)
    out_dir = args.out_dir or cfg.out_dir
    emit_reports(result.confusion, result.metrics, None, out_dir)
    m, cm = result.metrics, result.confusion
    print(f"split {args.split}: {cm.total} images (tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn})")
    print(f"accuracy {m.accuracy:.4f}  precision {m.precision:.4f}  "
          f"recall {m.recall:.4f}  f1 {m.f1:.4f}")
    if m.zero_division:
        print(f"zero division in: {', '.join(m.zero_division)}")
    return EXIT_OK


def cmd_predict(args):
    spec = None
    cfg = load_config(args.config) if args.config else None
    if cfg is not None:
        _apply_threads(args, cfg)
        spec = cfg.model_spec()
    else:
        _apply_threads(args, None)
    params, spec = _load_checkpoint(args.model, spec)
    pcfg = preprocess_config_for(spec, cfg.preprocess_config() if cfg else PreprocessConfig())
    ok = 0
    for path in args.images:
        try:
            img = preprocess(decode_image(path), pcfg)
        except DecodeError as exc:
            print(f"warning: {exc}", file=sys.stderr)
            continue
        probs = predict_images(params, spec, img[None])[0]
        k = int(np.argmax(probs))
        record = {"path": path, "label": CLASS_NAMES[k], "probability": float(probs[k])}
        if args.both:
            record["probabilities"] = {name: float(p) for name, p in zip(CLASS_NAMES, probs)}
        print(json.dumps(record))
        ok += 1
    return EXIT_OK if ok else EXIT_NO_PREDICTIONS


def _apply_threads(args, cfg):
    n = getattr(args, "threads", None)
    if n is None and cfg is not None:
        n = cfg.threads
    if n is None and os.environ.get("LPN_THREADS"):
        try:
            n = int(os.environ["LPN_THREADS"])
        except ValueError:
            raise ConfigError("LPN_THREADS must be an integer") from None
    if n is not None:
        if n < 1:
            raise ConfigError("--threads must be >= 1")
        _accel.set_threads(n)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="cap kernel worker threads (falls back to LPN_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="lpn", description="LightPneumoNet CNN toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="print the layer table and parameter totals")
    p.add_argument("--architecture", default="lightpneumonet")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("config", parents=[common], help="print the effective configuration as JSON")
    p.add_argument("-c", "--config", default=None)
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of backprop")
    p.add_argument("--architecture", default="reduced")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", parents=[common], help="train from a JSON config")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint on a dataset split")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "val"])
    p.add_argument("-o", "--out-dir", default=None, help="report directory (default: config out_dir)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="classify image files, one JSON line each")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-c", "--config", default=None)
    p.add_argument("--both", action="store_true", help="include both class probabilities")
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArchitectureError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, DecodeError) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except CheckpointFormatError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

Shapes are the heaviest layers of the reference network at batch size 4.
Each case is warmed up once (JIT compile or cache load), then timed as the
best of ``--repeat`` runs. Outputs of the two backends are compared too:
forward conv and pooling must agree exactly, backward passes to rounding.

    python3 benchmarks/bench_kernels.py --repeat 3 --batch 4
"""
import argparse
import time

import numpy as np

from lightpneumonet._accel import HAS_NUMBA
from lightpneumonet.kernels import get_backend


def cases(batch, rng):
    f32 = np.float32
    return {
        "conv1_2 forward": (
            "conv2d_forward",
            (rng.random((batch, 220, 220, 16), f32), rng.standard_normal((5, 5, 16, 16)).astype(f32),
             np.zeros(16, f32)),
        ),
        "conv2_1 forward": (
            "conv2d_forward",
            (rng.random((batch, 72, 72, 16), f32), rng.standard_normal((5, 5, 16, 32)).astype(f32),
             np.zeros(32, f32)),
        ),
        "conv1_2 backward": (
            "conv2d_backward",
            (rng.random((batch, 220, 220, 16), f32), rng.standard_normal((5, 5, 16, 16)).astype(f32),
             rng.standard_normal((batch, 216, 216, 16)).astype(f32), True),
        ),
        "conv4_2 backward": (
            "conv2d_backward",
            (rng.random((batch, 6, 6, 128), f32), rng.standard_normal((3, 3, 128, 128)).astype(f32),
             rng.standard_normal((batch, 4, 4, 128)).astype(f32), True),
        ),
        "pool1 forward": ("maxpool_forward", (rng.random((batch, 216, 216, 16), f32), 3, 3)),
        "dense1 backward": (
            "dense_backward",
            (rng.random((batch, 512), f32), rng.standard_normal((512, 128)).astype(f32),
             rng.standard_normal((batch, 128)).astype(f32)),
        ),
    }


def best_time(fn, args, repeat):
    out = fn(*args)  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def agreement(a, b, exact):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    if exact:
        return "exact" if all(np.array_equal(x, y) for x, y in zip(a, b)) else "DIFFERS"
    worst = max(float(np.max(np.abs(x - y)) / (np.max(np.abs(x)) or 1.0))
                for x, y in zip(a, b) if x is not None)
    return f"rel {worst:.1e}"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    if not HAS_NUMBA:
        print("numba not importable: timing the numpy fallback only")
    rng = np.random.default_rng(0)
    header = f"{'case':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  agreement"
    print(header)
    print("-" * len(header))
    for name, (op, call_args) in cases(args.batch, rng).items():
        timings, outputs = [], []
        for b in backends:
            t, out = best_time(getattr(get_backend(b), op), call_args, args.repeat)
            timings.append(t)
            outputs.append(out)
        row = f"{name:<18}" + "".join(f"{t * 1e3:>10.1f}ms" for t in timings)
        if len(backends) == 2:
            exact = op in ("conv2d_forward", "maxpool_forward")
            row += f"{timings[0] / timings[1]:>9.2f}x  {agreement(outputs[0], outputs[1], exact)}"
        print(row)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Compare the compiled and pure-Python kernel backends.

Times the patch-extraction / scatter-add / pooling kernels on the hot
geometry of the default capsule network, plus one full training step of
each model, and prints the per-kernel speedup. Both backends produce
bit-identical results (tests/test_backend_parity.py), so this is purely
a throughput comparison.

Usage: python3 benchmarks/bench_kernels.py [--batch 4] [--repeat 3]
"""

import argparse
import time

import numpy as np

from capsroute import backend, presets
from capsroute.capsnet import CapsNetModel
from capsroute.cnn import CnnModel
from capsroute.rng import make_rng


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(batch: int):
    """(name, callable) pairs sized like the default 64x64 model."""
    rng = make_rng(0, "bench")
    x1 = rng.random((batch, 1, 64, 64), dtype=np.float32)
    x2 = rng.random((batch, 64, 56, 56), dtype=np.float32)
    cols2 = rng.random((batch, 24 * 24, 64 * 81), dtype=np.float32)
    pooled_grad = rng.random((batch, 64, 28, 28), dtype=np.float32)

    caps = CapsNetModel(presets.DEFAULT, rng=make_rng(1, "bench-caps"))
    cnn = CnnModel(presets.CNN_DEFAULT, rng=make_rng(1, "bench-cnn"))
    imgs = rng.random((batch, 1, 64, 64), dtype=np.float32)
    labels = rng.integers(0, 3, size=batch)

    def pool_pair():
        _, idx = backend.maxpool2_forward(x2)
        backend.maxpool2_backward(pooled_grad, idx, 56, 56)

    return [
        ("im2col 1x64x64 k9 s1", lambda: backend.im2col(x1, 9, 1)),
        ("im2col 64x56x56 k9 s2", lambda: backend.im2col(x2, 9, 2)),
        ("col2im 64x56x56 k9 s2", lambda: backend.col2im(cols2, 64, 56, 56, 9, 2)),
        ("maxpool2 64x56x56 fwd+bwd", pool_pair),
        ("capsnet train step", lambda: caps.loss_and_grads(imgs, labels)),
        ("cnn train step", lambda: cnn.loss_and_grads(imgs, labels)),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=3, help="keep the best of N runs")
    args = parser.parse_args()

    initial = backend.BACKEND
    print(f"backends available: {', '.join(backend.AVAILABLE)}  "
          f"(batch {args.batch}, best of {args.repeat})\n")

    results: dict[str, dict[str, float]] = {}
    for name in backend.AVAILABLE:
        backend.select(name)
        for case, fn in build_cases(args.batch):
            fn()  # warm up allocators and BLAS
            results.setdefault(case, {})[name] = best_of(fn, args.repeat)
    backend.select(initial)

    width = max(len(c) for c in results)
    header = f"{'kernel':<{width}}  " + "".join(f"{n:>12}" for n in backend.AVAILABLE)
    if len(backend.AVAILABLE) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for case, times in results.items():
        row = f"{case:<{width}}  " + "".join(f"{times[n] * 1e3:>10.1f}ms" for n in backend.AVAILABLE)
        if "python" in times and "compiled" in times:
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

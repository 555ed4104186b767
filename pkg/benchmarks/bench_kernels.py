#!/usr/bin/env python3
"""Compare the compiled convolution kernels against the pure numpy fallback.

The shapes are the ones the desk-scale filter actually runs during
training.  Pin BLAS threads for a fair single-core comparison:

    OPENBLAS_NUM_THREADS=1 OMP_NUM_THREADS=1 python benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

from echoclutter.engine import backend, kernels_numpy

SHAPES = [
    ("enc0a  1->8   @64x64x16", (2, 1, 64, 64, 16), 8),
    ("enc0b  8->16  @64x64x16", (2, 8, 64, 64, 16), 16),
    ("enc1b  16->32 @32x32x16", (2, 16, 32, 32, 16), 32),
    ("bot.b  32->64 @16x16x16", (2, 32, 16, 16, 16), 64),
    ("dec1a  96->32 @32x32x16", (2, 96, 32, 32, 16), 32),
    ("dec0a  48->16 @64x64x16", (2, 48, 64, 64, 16), 16),
]


def timeit(fn, *args, reps=5):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()

    if not backend.HAS_COMPILED:
        print("compiled backend not built; benchmarking the fallback only")
    rng = np.random.default_rng(0)
    header = f"{'layer':28s} {'compiled':>12s} {'numpy':>12s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    totals = [0.0, 0.0]
    for name, xshape, co in SHAPES:
        x = rng.standard_normal(xshape).astype(np.float32)
        w = rng.standard_normal((co, xshape[1], 3, 3, 3)).astype(np.float32)
        b = np.zeros(co, np.float32)
        flops = 2 * np.prod(xshape) / xshape[1] * np.prod(w.shape)
        tn = timeit(kernels_numpy.conv3d_forward, x, w, b, reps=args.reps)
        if backend.HAS_COMPILED:
            from echoclutter.engine import _kernels
            tc = timeit(_kernels.conv3d_forward, x, w, b, reps=args.reps)
        else:
            tc = tn
        totals[0] += tc
        totals[1] += tn
        print(f"{name:28s} {tc * 1e3:9.1f} ms {tn * 1e3:9.1f} ms {tn / tc:7.1f}x"
              f"   ({flops / tc / 1e9:5.1f} GFLOP/s)")
    print("-" * len(header))
    print(f"{'forward pass total':28s} {totals[0] * 1e3:9.1f} ms {totals[1] * 1e3:9.1f} ms "
          f"{totals[1] / totals[0]:7.1f}x")

    # weight-gradient kernels, the other hot path during training
    print()
    for name, xshape, co in SHAPES[-2:]:
        x = rng.standard_normal(xshape).astype(np.float32)
        dy = rng.standard_normal((xshape[0], co, *xshape[2:])).astype(np.float32)
        tn = timeit(kernels_numpy.conv3d_grad_weights, x, dy, (3, 3, 3), reps=args.reps)
        if backend.HAS_COMPILED:
            from echoclutter.engine import _kernels
            tc = timeit(_kernels.conv3d_grad_weights, x, dy, (3, 3, 3), reps=args.reps)
        else:
            tc = tn
        print(f"grad_w {name:21s} {tc * 1e3:9.1f} ms {tn * 1e3:9.1f} ms {tn / tc:7.1f}x")


if __name__ == "__main__":
    main()

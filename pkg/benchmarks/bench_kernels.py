"""Time each kernel in its numba and numpy flavour on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call per kernel (compilation or cache load) is excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from semcad import kernels
from semcad._accel import HAVE_NUMBA


def cases(rng):
    a = rng.normal(size=(246, 246))
    sym = np.ascontiguousarray(a @ a.T / 246)
    X = np.ascontiguousarray(rng.integers(0, 442, size=(16_000, 10)))
    idx = np.arange(16_000)
    feats = np.arange(10)
    y = (rng.random(16_000) < 0.03).astype(float)
    g, h = rng.normal(size=16_000), rng.random(16_000)
    codes = rng.integers(0, 442, size=256)
    rows = np.ascontiguousarray(rng.normal(size=(256, 50)))
    pts = np.ascontiguousarray(rng.normal(size=(16_000, 2)))
    cents = np.ascontiguousarray(rng.normal(size=(5, 2)))
    # a complete binary tree of depth 8 over random features
    n_int = 2**8 - 1
    feature = np.r_[rng.integers(0, 10, n_int), -np.ones(n_int + 1, dtype=np.int64)]
    threshold = np.r_[rng.integers(0, 442, n_int), np.zeros(n_int + 1, dtype=np.int64)]
    left = np.r_[2 * np.arange(n_int) + 1, -np.ones(n_int + 1, dtype=np.int64)]
    right = np.r_[2 * np.arange(n_int) + 2, -np.ones(n_int + 1, dtype=np.int64)]
    return {
        "jacobi_eigh (246x246)": ("jacobi_eigh", (sym, 1e-12, 100)),
        "gini_best_split (16k x 10)": ("gini_best_split", (X, idx, feats, y * 32, 1 - y, 442, 5)),
        "newton_best_split (16k x 10)": ("newton_best_split", (X, idx, feats, g, h, 1.0, 442, 1)),
        "scatter_add_rows (256 x 50)": ("scatter_add_rows", (np.zeros((442, 50)), codes, rows)),
        "nearest_centroid (16k, K=5)": ("nearest_centroid", (pts, cents)),
        "tree_apply (16k, depth 8)": ("tree_apply", (feature, threshold, left, right, X)),
    }


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    flavours = [("numpy", kernels.NUMPY)] + ([("numba", kernels.NUMBA)] if HAVE_NUMBA else [])
    print(f"{'kernel':<32}" + "".join(f"{name:>12}" for name, _ in flavours) + ("    speedup" if HAVE_NUMBA else ""))
    for label, (name, kargs) in cases(rng).items():
        row = []
        for _, ns in flavours:
            fn = getattr(ns, name)
            fn(*kargs)  # warm-up / compile
            row.append(best_time(fn, kargs, args.repeat))
        cells = "".join(f"{1e3 * t:>10.2f}ms" for t in row)
        extra = f"{row[0] / row[1]:>10.1f}x" if len(row) == 2 else ""
        print(f"{label:<32}{cells}{extra}")


if __name__ == "__main__":
    main()

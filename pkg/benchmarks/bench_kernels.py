#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs each hot kernel on representative workloads and prints a table of
per-call times plus the speedup. The pipeline picks the native backend
automatically when it imports; this script shows what that buys.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from explet import _pykernels

try:
    from explet import _native
except ImportError:
    _native = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_descriptor(kernel, patches, sigma):
    def run():
        for p in patches:
            kernel(p, sigma)
    return run


def bench_hog(kernel, frames):
    def run():
        for f in frames:
            kernel(f)
    return run


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []

    patches = [rng.random((24, 24)) for _ in range(2000)]
    rows.append(("sift voting (2000 x 24x24)",
                 bench_descriptor(_pykernels.sift_hist, patches, 12.0),
                 bench_descriptor(_native.sift_hist, patches, 12.0) if _native else None))

    frames = [rng.random((24, 24)) for _ in range(2000)]
    rows.append(("hog voting (2000 x 24x24)",
                 bench_hog(_pykernels.hog_frame_hist, frames),
                 bench_hog(_native.hog_frame_hist, frames) if _native else None))

    X = np.hstack([rng.standard_normal((300, 2048)), np.ones((300, 1))])
    y = np.where(rng.random(300) > 0.5, 1.0, -1.0)

    def svm_runner(mod):
        def run():
            mod.svm_dual_cd(X, y, 1.0, 50, 0.0)
        return run

    rows.append(("svm dual CD (300 x 2049, 50 epochs)",
                 svm_runner(_pykernels),
                 svm_runner(_native) if _native else None))

    print(f"{'kernel':<40} {'pure':>10} {'native':>10} {'speedup':>9}")
    print("-" * 72)
    for name, pure_fn, native_fn in rows:
        t_pure = timeit(pure_fn, args.repeats)
        if native_fn is None:
            print(f"{name:<40} {t_pure:>9.3f}s {'n/a':>10} {'n/a':>9}")
            continue
        t_native = timeit(native_fn, args.repeats)
        print(f"{name:<40} {t_pure:>9.3f}s {t_native:>9.3f}s "
              f"{t_pure / t_native:>8.1f}x")
    if _native is None:
        print("\ncompiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()

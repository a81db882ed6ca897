#!/usr/bin/env python3
"""Benchmark the compiled hot kernels against the pure-numpy fallback.

Times the three kernels that dominate solver runtime (elementwise shrinkage,
short-kernel window convolution, and the fused dense fixed-point loop) and
writes a CSV with mean wall times and the speedup. Run after building the
extension:

    python benchmarks/bench_kernels.py --out benchmarks/results.csv
"""

import argparse
import csv
import sys
import time

import numpy as np

from pnpreg._kernels import _fallback

try:
    from pnpreg._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    arr = np.array(best)
    return float(arr.mean()), float(arr.std())


def benchmarks(rng):
    x_small = rng.standard_normal(256)
    x_big = rng.standard_normal(262_144)
    taps = np.abs(rng.standard_normal(32))
    taps /= taps.sum() * 1.1
    x_conv = rng.standard_normal(4096)

    n = 50
    A = rng.standard_normal((64, n))
    A /= np.linalg.norm(A, 2) * 1.05
    G = np.ascontiguousarray(A.T @ A)
    b = A.T @ rng.standard_normal(64)
    x0 = np.zeros(n)
    lam = 3e-4  # small margin: ~1e5 fused iterations
    shrink = 1.0 / (1.0 + lam)
    threshold = 1e-10 * lam

    cases = [
        ("soft_threshold_256", lambda impl: impl.soft_threshold(x_small, 0.3), 2000),
        ("soft_threshold_262144", lambda impl: impl.soft_threshold(x_big, 0.3), 20),
        ("conv_window_4096x32", lambda impl: impl.conv_window(taps, 0, x_conv), 100),
        ("fbs_dense_n50_smallmargin",
         lambda impl: impl.fbs_dense(G, b, 1.0, 0, shrink, 0.0, x0, threshold,
                                     2_000_000), 3),
    ]
    return cases


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="benchmarks/results.csv")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    rows = []
    for name, fn, inner in benchmarks(rng):
        def run(impl, fn=fn, inner=inner):
            for _ in range(inner):
                fn(impl)

        py_mean, py_std = _time(lambda: run(_fallback), args.repeats)
        row = {"case": name, "python_mean_s": py_mean, "python_std_s": py_std,
               "compiled_mean_s": "", "compiled_std_s": "", "speedup": ""}
        if _core is not None:
            c_mean, c_std = _time(lambda: run(_core), args.repeats)
            row.update(compiled_mean_s=c_mean, compiled_std_s=c_std,
                       speedup=py_mean / c_mean)
            print(f"{name:30s} python {py_mean:.4f}s  compiled {c_mean:.4f}s  "
                  f"x{py_mean / c_mean:.1f}")
        else:
            print(f"{name:30s} python {py_mean:.4f}s  (no compiled extension)")
        rows.append(row)

    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Timing comparison of the compiled kernels against the numpy reference.

Usage: python benchmarks/bench_kernels.py [--sizes 5,15,25,35] [--repeats 200]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from otgcl._kernels import _ref

try:
    from otgcl._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def bench(sizes, repeats):
    rng = np.random.default_rng(0)
    rows = []
    for k in sizes:
        cost = np.exp(-rng.uniform(-1, 1, (k, k)) / 0.5)
        logu = np.log(np.full(k, 1.0 / k))
        da = rng.uniform(0, 3, (k, k)); da = (da + da.T) / 2; np.fill_diagonal(da, 0)
        db = rng.uniform(0, 3, (k, k)); db = (db + db.T) / 2; np.fill_diagonal(db, 0)
        plan = np.full((k, k), 1.0 / (k * k))

        cases = [
            ("sinkhorn_log", lambda b: lambda: b.sinkhorn_log(
                cost, logu, logu, 0.05, 500, 1e-6)),
            ("gw_lin_cost", lambda b: lambda: b.gw_lin_cost(da, db, plan)),
            ("gw_grad", lambda b: lambda: b.gw_grad(da, db, plan)),
        ]
        for name, make in cases:
            t_ref = _time(make(_ref), repeats)
            if _core is not None:
                t_core = _time(make(_core), repeats)
                rows.append((name, k, t_ref * 1e6, t_core * 1e6,
                             t_ref / t_core))
            else:
                rows.append((name, k, t_ref * 1e6, None, None))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="5,15,25,35")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _core is None:
        print("compiled extension not built; timing the numpy reference only")
    rows = bench(sizes, args.repeats)
    header = f"{'kernel':<14} {'k':>3} {'numpy us':>12} {'compiled us':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, k, t_ref, t_core, ratio in rows:
        if t_core is None:
            print(f"{name:<14} {k:>3} {t_ref:>12.1f} {'-':>12} {'-':>8}")
        else:
            print(f"{name:<14} {k:>3} {t_ref:>12.1f} {t_core:>12.1f} {ratio:>7.1f}x")


if __name__ == "__main__":
    main()

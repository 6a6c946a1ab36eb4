#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeats 5]
Set COG_DISABLE_NUMBA=1 to confirm the engine still runs on the fallbacks.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cog import kernels


def timeit(fn, *args, repeats: int = 5) -> float:
    fn(*args)  # warm up (numba compiles here)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if not kernels.NUMBA_ENABLED:
        print("numba path unavailable (disabled or not installed); nothing to compare")
        return

    rng = np.random.default_rng(0)
    embs = rng.uniform(-0.1, 0.1, (5000, 64))
    query = rng.integers(0, 30, 8).astype(np.int64)
    doc = rng.integers(0, 30, 4000).astype(np.int64)
    a = rng.normal(size=2000)
    b = rng.normal(size=2000)

    cases = [
        ("context_series (5000x64)", kernels._context_series_nb, kernels._context_series_np, (embs, 0.5)),
        ("longest_match (q8, doc4000)", kernels._longest_match_nb, kernels._longest_match_np, (query, doc)),
        ("span_max (m=2000, lmax=8)", kernels._span_max_nb, kernels._span_max_np, (a, b, 8)),
        ("span_sumexp", kernels._span_sumexp_nb, kernels._span_sumexp_np, (a, b, 8, 1.0)),
        ("span_weight_sums", kernels._span_weight_sums_nb, kernels._span_weight_sums_np, (a, b, 8, 1.0, 2.0)),
    ]
    print(f"{'kernel':<30} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, fast, slow, call_args in cases:
        t_nb = timeit(fast, *call_args, repeats=args.repeats)
        t_np = timeit(slow, *call_args, repeats=args.repeats)
        print(f"{name:<30} {t_nb*1e3:>8.3f}ms {t_np*1e3:>8.3f}ms {t_np/t_nb:>7.1f}x")


if __name__ == "__main__":
    main()

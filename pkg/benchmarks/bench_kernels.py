"""Compare the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--assets 3000] [--months 480]

Prints the best-of-N wall time per kernel and backend, and checks that both
backends return identical arrays on the benchmark inputs.
"""

import argparse
import time

import numpy as np

from factorengine._core import BACKENDS


def make_inputs(n_assets, n_months, seed=0):
    rng = np.random.default_rng(seed)
    counts = rng.integers(n_months // 2, n_months + 1, n_assets)
    starts = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    dates = np.concatenate([np.sort(rng.choice(n_months * 31, c, replace=False)) for c in counts]).astype(np.int64)
    n = len(dates)
    groups = np.repeat(np.arange(n_assets, dtype=np.int64), counts)
    targets = dates - rng.integers(0, 400, n)
    lower = np.full(n, np.iinfo(np.int64).min, dtype=np.int64)
    valid = (rng.random(n) > 0.2).astype(np.uint8)

    T, N = n_months, min(n_assets, 500)
    weights = np.zeros((T, N))
    for t in range(T):
        pick = rng.choice(N, N // 10, replace=False)
        weights[t, pick] = 1.0 / len(pick)
    rets = rng.normal(0.01, 0.05, (T, N))
    rets[rng.random((T, N)) < 0.01] = np.nan
    mask = np.ones(T, dtype=np.uint8)
    return {
        "asof_index": (starts, dates, groups, targets, lower),
        "fill_index": (starts, valid, False),
        "simulate": (weights, mask, rets, 0.01, 1.0),
    }


def best_of(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--assets", type=int, default=3000)
    ap.add_argument("--months", type=int, default=480)
    args = ap.parse_args()
    if "compiled" not in BACKENDS:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    inputs = make_inputs(args.assets, args.months)
    print(f"{'kernel':<12} {'python (s)':>11} {'compiled (s)':>13} {'speedup':>8}  identical")
    for name, kargs in inputs.items():
        tp, op = best_of(getattr(BACKENDS["python"], name), kargs, args.repeat)
        tc, oc = best_of(getattr(BACKENDS["compiled"], name), kargs, args.repeat)
        print(f"{name:<12} {tp:>11.4f} {tc:>13.4f} {tp / tc:>7.1f}x  {same(op, oc)}")


if __name__ == "__main__":
    main()

"""Pure-Python/NumPy versions of the compiled kernels.

Used when the extension is not built or when ``FACTORENGINE_PURE_PYTHON`` is
set. Every function here must return exactly what its compiled twin returns.
"""

import numpy as np


def asof_index(starts, dates, groups, targets, lower_bounds):
    n = len(targets)
    out = np.full(n, -1, dtype=np.int64)
    if n == 0 or len(dates) == 0:
        return out
    ngroups = len(starts) - 1
    row_group = np.repeat(np.arange(ngroups, dtype=np.int64), np.diff(starts))
    lo = min(int(dates.min()), int(targets.min()))
    span = max(int(dates.max()), int(targets.max())) - lo + 1
    # Composite (group, date) key is sorted because rows are sorted by (id, date).
    keys = row_group * span + (dates - lo)
    ok = groups >= 0
    probe = np.where(ok, groups, 0) * span + (targets - lo)
    j = np.searchsorted(keys, probe, side="right") - 1
    hit = ok & (j >= 0)
    jj = np.where(hit, j, 0)
    hit &= row_group[jj] == groups
    hit &= dates[jj] >= lower_bounds
    out[hit] = j[hit]
    return out


def fill_index(starts, valid, backward):
    n = len(valid)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    counts = np.diff(starts)
    idx = np.arange(n, dtype=np.int64)
    if backward:
        row_end = np.repeat(starts[1:] - 1, counts)
        src = np.where(valid.astype(bool), idx, n)
        src = np.minimum.accumulate(src[::-1])[::-1]
        return np.where(src <= row_end, src, -1)
    row_start = np.repeat(starts[:-1], counts)
    src = np.where(valid.astype(bool), idx, -1)
    src = np.maximum.accumulate(src)
    return np.where(src >= row_start, src, -1)


def simulate(targets, rebalance, returns, fee_rate, capital0):
    T, N = targets.shape
    capital = np.zeros(T)
    turnover = np.zeros(T)
    fees = np.zeros(T)
    if T == 0:
        return capital, turnover, fees, 0
    held = np.zeros(N)
    c = float(capital0)
    null_hits = 0
    capital[0] = c
    for t in range(1, T):
        if c <= 0.0:
            continue
        if rebalance[t - 1]:
            # cumsum keeps the compiled kernel's left-to-right summation order
            tv = float(np.cumsum(np.abs(targets[t - 1] - held))[-1]) if N else 0.0
            held = targets[t - 1].copy()
            f = c * tv * fee_rate
            c -= f
            turnover[t] = tv
            fees[t] = f
        active = held != 0.0
        r = returns[t]
        missing = active & np.isnan(r)
        null_hits += int(missing.sum())
        r = np.where(np.isnan(r), 0.0, r)
        growth = float(np.cumsum(np.concatenate(([1.0], held[active] * r[active])))[-1])
        c = c * growth
        if c <= 0.0:
            c = 0.0
            held[:] = 0.0
        else:
            held = np.where(active, held * (1.0 + r) / growth, 0.0)
        capital[t] = c
    return capital, turnover, fees, null_hits

"""Small builders shared by the test modules."""

import math

import numpy as np

import oracle

from factorengine.panel import PanelFrame


def make_frame(rows, columns=("x",)):
    """rows: iterable of (id, 'YYYY-MM-DD', *values)."""
    rows = list(rows)
    ids = np.array([r[0] for r in rows], dtype=str)
    dates = np.array([r[1] for r in rows], dtype="datetime64[D]")
    cols = {c: np.array([np.nan if r[2 + j] is None else r[2 + j] for r in rows], dtype=float)
            for j, c in enumerate(columns)}
    return PanelFrame(ids, dates, cols)


def month_ends(start, n):
    m = np.datetime64(start, "M") + np.arange(n)
    return ((m + 1).astype("datetime64[D]") - 1).astype(str).tolist()


def random_panel(rng, n_assets, n_dates, columns=("x", "y"), null_rate=0.1, keep=0.8, span=400):
    """Irregularly dated panel with random gaps and nulls."""
    ids, dates, vals = [], [], {c: [] for c in columns}
    base = np.datetime64("2015-01-01")
    for a in range(n_assets):
        k = int(rng.integers(1, n_dates + 1))
        offs = np.sort(rng.choice(span, size=min(k, span), replace=False))
        offs = offs[rng.random(len(offs)) < keep]
        for o in offs:
            ids.append(f"S{a:03d}")
            dates.append(base + o)
            for c in columns:
                vals[c].append(np.nan if rng.random() < null_rate else float(rng.normal()))
    if not ids:
        ids, dates = ["S000"], [base]
        vals = {c: [1.0] for c in columns}
    return PanelFrame(np.array(ids), np.array(dates, dtype="datetime64[D]"),
                      {c: np.array(v) for c, v in vals.items()})


def daily_panel(rng, n_assets, n_days, null_rate=0.0, start="2021-01-04"):
    """Business-day returns plus a monthly factor column "f"."""
    days = np.busday_offset(start, np.arange(n_days), roll="forward")
    ids = np.repeat([f"S{i:02d}" for i in range(n_assets)], n_days)
    dates = np.tile(days, n_assets)
    ret = rng.normal(0.0005, 0.02, n_assets * n_days)
    ret[rng.random(len(ret)) < null_rate] = np.nan
    returns = PanelFrame(ids, dates, {"ret": ret})
    months = np.unique(days.astype("datetime64[M]"))
    fdates = (months + 1).astype("datetime64[D]") - 1 - 40  # off the trading calendar on purpose
    fids = np.repeat([f"S{i:02d}" for i in range(n_assets)], len(fdates))
    fvals = rng.normal(size=len(fids))
    fvals[rng.random(len(fvals)) < 0.1] = np.nan
    factors = PanelFrame(fids, np.tile(fdates, n_assets), {"f": fvals})
    return factors, returns


def as_rows(frame, col):
    return [(str(i), oracle.to_date(d), None if math.isnan(v) else float(v))
            for i, d, v in zip(frame.ids, frame.dates, frame[col])]

"""Seeded synthetic monthly panels covering the whole canonical vocabulary.

The numbers are plausible in scale but make no attempt to mimic real market
distributions. Panels include staggered listings, dropped months and random
null cells so that lag and null handling get exercised.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .panel import ColumnSchema, PanelFrame, write_csv

DEFAULT_SEED = 20240611

ACCOUNTING_RATIOS = {
    # column: (low, high) as a fraction of total assets
    "cash": (0.02, 0.20),
    "ca": (0.20, 0.55),
    "cl": (0.10, 0.40),
    "ltd": (0.00, 0.35),
    "dp": (0.01, 0.05),
    "ppegt": (0.20, 0.60),
    "invt": (0.00, 0.20),
    "gp": (0.10, 0.50),
}


@dataclass(frozen=True)
class SyntheticData:
    panel: PanelFrame
    index: PanelFrame  # single pseudo-asset "__index__" with ret, level, mv

    def index_table(self) -> dict[str, np.ndarray]:
        return {"date": self.index.dates, "ret": self.index["ret"],
                "level": self.index["level"], "mv": self.index["mv"]}


def generate(n_assets: int = 100, n_months: int = 120, seed: int = DEFAULT_SEED, *,
             null_rate: float = 0.01, gap_rate: float = 0.01, start: str = "2000-01") -> SyntheticData:
    rng = np.random.default_rng(seed)
    N, M = n_assets, n_months
    months = np.datetime64(start, "M") + np.arange(M)
    month_ends = (months + 1).astype("datetime64[D]") - 1

    first = np.where(rng.random(N) < 0.3, rng.integers(0, max(M // 4, 1), N), 0)
    last = np.where(rng.random(N) < 0.15, rng.integers(M // 2, M, N), M - 1)
    col_idx = np.arange(M)[None, :]
    live = (col_idx >= first[:, None]) & (col_idx <= last[:, None])
    inner = (col_idx > first[:, None]) & (col_idx < last[:, None])
    live &= ~(inner & (rng.random((N, M)) < gap_rate))

    ret = np.clip(rng.standard_t(5, (N, M)) * 0.07 + 0.008, -0.9, 2.0)
    price = rng.uniform(3, 120, N)[:, None] * np.cumprod(1 + ret, axis=1)
    shares = rng.uniform(1e6, 2e8, N)[:, None] * np.cumprod(
        np.where(rng.random((N, M)) < 0.04, 1 + rng.uniform(-0.05, 0.25, (N, M)), 1.0), axis=1)
    mv = price * shares / 1e6

    # accounting values refresh at quarter-ends and are carried in between
    quarter = col_idx // 3
    q_growth = rng.normal(0.015, 0.06, (N, (M + 2) // 3))
    ta = rng.lognormal(7, 1.5, N)[:, None] * np.exp(np.cumsum(q_growth, axis=1))[:, quarter[0]]

    def refreshed(lo, hi):
        draws = rng.uniform(lo, hi, (N, (M + 2) // 3))
        return draws[:, quarter[0]]

    cols = {"ret": ret, "price": price, "shares": shares, "mv": mv, "ta": ta}
    for name, (lo, hi) in ACCOUNTING_RATIOS.items():
        cols[name] = ta * refreshed(lo, hi)
    cols["std"] = cols["cl"] * refreshed(0.0, 0.3)
    cols["txp"] = cols["cl"] * refreshed(0.0, 0.1)
    tl = ta * refreshed(0.3, 1.1)
    cols["tl"] = tl
    cols["ceq"] = ta - tl
    ni = ta * (rng.normal(0.03, 0.06, (N, (M + 2) // 3))[:, quarter[0]])
    cols["ni"] = ni
    cols["ibq"] = ni / 4 * refreshed(0.8, 1.2)
    cols["ffo"] = ni + cols["dp"]

    for name in cols:
        cols[name] = np.where(rng.random((N, M)) < null_rate, np.nan, cols[name])

    ids = np.array([f"A{i:05d}" for i in range(N)])
    flat = live.ravel()
    panel = PanelFrame(np.repeat(ids, M)[flat], np.tile(month_ends, N)[flat],
                       {k: v.ravel()[flat] for k, v in cols.items()})

    idx_ret = rng.normal(0.007, 0.04, M)
    market_mv = np.nansum(np.where(live, mv, np.nan), axis=0) * 4.0
    index = PanelFrame(np.full(M, "__index__"), month_ends,
                       {"ret": idx_ret, "level": 100 * np.cumprod(1 + idx_ret), "mv": market_mv})
    return SyntheticData(panel, index)


def bundled() -> SyntheticData:
    """The fixed 100 assets x 120 months dataset used by the acceptance suite."""
    return generate(100, 120, DEFAULT_SEED)


def write_dataset(data: SyntheticData, outdir) -> dict[str, str]:
    """Write panel.csv, index.csv and schema.toml into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    paths = {k: os.path.join(outdir, f) for k, f in
             (("panel", "panel.csv"), ("index", "index.csv"), ("schema", "schema.toml"))}
    with open(paths["panel"], "w", newline="") as fh:
        write_csv(data.panel, fh)
    with open(paths["index"], "w", newline="") as fh:
        dates = data.index.dates.astype(str)
        fh.write("date,ret,level,mv\n")
        for i in range(len(data.index)):
            vals = (data.index[c][i] for c in ("ret", "level", "mv"))
            fh.write(",".join([dates[i], *(format(v, ".17g") for v in vals)]) + "\n")
    schema = ColumnSchema("id", "date", tuple((c, c) for c in data.panel.columns))
    with open(paths["schema"], "w") as fh:
        fh.write(schema.to_toml())
    return paths

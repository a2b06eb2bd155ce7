"""Single-factor ranking backtests with turnover fees.

Timing: at clock date D[k] the strategy ranks assets on the latest factor
value dated at or before D[k], pays the turnover fee, and holds the new
weights until D[k+1], earning the returns dated D[k+1]. Capital is floored at
zero and stays there once hit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _core
from .errors import EmptyUniverseError, ParameterError, SchemaError
from .panel import PanelFrame, asof_positions, take


class Direction(str, enum.Enum):
    HIGHER = "higher_is_better"
    LOWER = "lower_is_better"


class Mode(str, enum.Enum):
    LONG_ONLY = "long_only"
    LONG_SHORT = "long_short"


class Rebalance(str, enum.Enum):
    DAILY = "daily"      # every clock date
    MONTHLY = "monthly"  # first clock date of each calendar month


@dataclass(frozen=True)
class StrategyConfig:
    factor: str
    direction: Direction = Direction.HIGHER
    mode: Mode = Mode.LONG_ONLY
    selection: int | float | str = 0.1
    fee_bps: float = 100.0
    risk_free_rate: float = 0.05
    initial_capital: float = 1.0
    rebalance: Rebalance = Rebalance.DAILY

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "rebalance", Rebalance(self.rebalance))
        if self.fee_bps < 0:
            raise ParameterError("fee_bps must be non-negative")
        if self.initial_capital <= 0:
            raise ParameterError("initial_capital must be positive")
        sel = self.selection
        if isinstance(sel, str):
            if sel.lower() != "all":
                raise ParameterError(f"selection must be a count, a fraction or 'all', got {sel!r}")
        elif isinstance(sel, bool) or sel <= 0:
            raise ParameterError(f"selection must be positive, got {sel!r}")
        elif isinstance(sel, float) and sel > 1:
            raise ParameterError("fractional selection must be in (0, 1]")

    @classmethod
    def from_dict(cls, factor: str, data: Mapping) -> "StrategyConfig":
        allowed = {"direction", "mode", "selection", "fee_bps", "risk_free_rate",
                   "initial_capital", "rebalance"}
        unknown = set(data) - allowed
        if unknown:
            raise ParameterError(f"unknown strategy key(s) {sorted(unknown)}")
        return cls(factor, **dict(data))


def selection_count(selection, n: int) -> int:
    if n == 0:
        return 0
    if isinstance(selection, str):
        return n
    if isinstance(selection, (int, np.integer)):
        return min(int(selection), n)
    return max(1, min(n, math.floor(round(selection * n, 9))))


def select_weights(values: np.ndarray, config: StrategyConfig) -> np.ndarray:
    """Equal-weight target weights for one cross-section.

    ``values`` is ordered by ascending asset id, which is also the tie-break
    order. Nulls are excluded. The short leg is drawn from the assets left
    after the long leg, so the legs never overlap.
    """
    values = np.asarray(values, dtype=np.float64)
    w = np.zeros(len(values))
    ok = np.flatnonzero(~np.isnan(values))
    n = len(ok)
    if n == 0:
        return w
    score = values[ok] if config.direction is Direction.HIGHER else -values[ok]
    k = selection_count(config.selection, n)
    if config.mode is Mode.LONG_SHORT:
        k = min(k, n // 2)
        if k == 0:
            return w
    best_first = ok[np.lexsort((ok, -score))]
    w[best_first[:k]] = 1.0 / k
    if config.mode is Mode.LONG_SHORT:
        rest = best_first[k:]
        rest_score = score[np.searchsorted(ok, rest)]
        worst_first = rest[np.lexsort((rest, rest_score))]
        w[worst_first[:k]] = -1.0 / k
    return w


def rank_and_select(cross_section: Mapping[str, float], config: StrategyConfig) -> dict[str, float]:
    """Mapping version of :func:`select_weights`: asset -> weight for selected assets."""
    ids = sorted(cross_section)
    vals = np.array([np.nan if cross_section[i] is None else cross_section[i] for i in ids], dtype=float)
    w = select_weights(vals, config)
    return {i: float(x) for i, x in zip(ids, w) if x != 0.0}


def step(capital: float, prev_weights: Mapping[str, float], target_weights: Mapping[str, float],
         returns: Mapping[str, float], fee_bps: float):
    """Advance one period: rebalance to ``target_weights``, pay fees, earn ``returns``.

    Returns ``(new_capital, realized_weights, info)``. Realized weights are the
    post-return drifted weights. A held asset with a null return is treated as
    cash for the period and counted in ``info["null_returns"]``.
    """
    if capital < 0:
        raise ParameterError("capital must be non-negative")
    if capital == 0:
        return 0.0, {}, {"turnover": 0.0, "fee": 0.0, "null_returns": 0}
    keys = sorted(set(prev_weights) | set(target_weights))
    turnover = sum(abs(target_weights.get(k, 0.0) - prev_weights.get(k, 0.0)) for k in keys)
    fee = capital * turnover * fee_bps / 10000.0
    capital = capital - fee
    growth = 1.0
    nulls = 0
    rets = {}
    for k in sorted(target_weights):
        r = returns.get(k)
        if r is None or (isinstance(r, float) and math.isnan(r)):
            nulls += 1
            r = 0.0
        rets[k] = r
        growth += target_weights[k] * r
    new = capital * growth
    if new <= 0:
        return 0.0, {}, {"turnover": turnover, "fee": fee, "null_returns": nulls}
    realized = {k: w * (1 + rets[k]) / growth for k, w in target_weights.items() if w != 0.0}
    return new, realized, {"turnover": turnover, "fee": fee, "null_returns": nulls}


@dataclass(frozen=True)
class EquityCurve:
    dates: np.ndarray
    capital: np.ndarray

    def to_csv(self) -> str:
        lines = ["date,capital"]
        lines += [f"{d},{format(c, '.17g')}" for d, c in zip(self.dates.astype(str), self.capital)]
        return "\n".join(lines) + "\n"


@dataclass
class BacktestReport:
    total_return: float | None
    annualized_return: float | None
    volatility: float | None
    sharpe: float | None
    max_drawdown: float | None
    final_capital: float
    periods_per_year: int
    n_periods: int
    total_turnover: float = 0.0
    total_fees: float = 0.0
    null_return_hits: int = 0
    weights: list = field(default_factory=list, repr=False)

    METRICS = ("total_return", "annualized_return", "volatility", "sharpe", "max_drawdown")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.METRICS}
        out.update(final_capital=self.final_capital, periods_per_year=self.periods_per_year,
                   n_periods=self.n_periods, total_turnover=self.total_turnover,
                   total_fees=self.total_fees, null_return_hits=self.null_return_hits)
        return out


@dataclass
class BacktestResult:
    config: StrategyConfig
    curve: EquityCurve
    report: BacktestReport


def infer_periods_per_year(dates) -> int:
    dates = np.asarray(dates, dtype="datetime64[D]")
    if len(dates) < 2:
        return 252
    gap = float(np.median(np.diff(dates).astype(np.int64)))
    for limit, ppy in ((4, 252), (10, 52), (45, 12), (135, 4)):
        if gap <= limit:
            return ppy
    return 1


def _none_if_bad(x):
    x = float(x)
    return x if math.isfinite(x) else None


def compute_metrics(curve: EquityCurve, risk_free_rate: float = 0.05,
                    periods_per_year: int | None = None) -> BacktestReport:
    """Total/annualised return, annualised volatility, Sharpe and max drawdown.

    Volatility is the population std of per-period simple returns scaled by
    sqrt(periods_per_year). Sharpe is null when volatility is zero.
    """
    c = np.asarray(curve.capital, dtype=np.float64)
    ppy = periods_per_year or infer_periods_per_year(curve.dates)
    n = len(c)
    final = float(c[-1]) if n else float("nan")
    if n < 2:
        return BacktestReport(None, None, None, None, None, final, ppy, max(n - 1, 0))
    total = c[-1] / c[0] - 1
    # expm1/log keeps the small-return digits that pow(...) - 1 cancels away
    ratio = float(c[-1] / c[0])
    ann = math.expm1(math.log(ratio) * ppy / (n - 1)) if ratio > 0 else (-1.0 if ratio == 0 else math.nan)
    prev = c[:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        rets = np.where(prev > 0, c[1:] / np.where(prev > 0, prev, 1.0) - 1, 0.0)
    vol = float(np.sqrt(np.mean((rets - rets.mean()) ** 2)) * math.sqrt(ppy))
    sharpe = (ann - risk_free_rate) / vol if vol > 0 else None
    peak = np.maximum.accumulate(c)
    dd = float(np.max((peak - c) / peak))
    return BacktestReport(_none_if_bad(total), _none_if_bad(ann), vol,
                          None if sharpe is None else _none_if_bad(sharpe), dd, final, ppy, n - 1)


def _dense(frame: PanelFrame, column: str, assets: np.ndarray, clock: np.ndarray, exact: bool):
    T, N = len(clock), len(assets)
    ids = np.repeat(assets, T)
    dates = np.tile(clock, N)
    pos = asof_positions(frame, ids, dates, dates if exact else None)
    return np.ascontiguousarray(take(frame[column], pos).reshape(N, T).T)


def rebalance_mask(clock: np.ndarray, rebalance: Rebalance) -> np.ndarray:
    mask = np.ones(len(clock), dtype=np.uint8)
    if rebalance is Rebalance.MONTHLY and len(clock) > 1:
        m = clock.astype("datetime64[M]")
        mask[1:] = (m[1:] != m[:-1]).astype(np.uint8)
    return mask


def run_backtest(factors: PanelFrame, returns: PanelFrame, config: StrategyConfig,
                 return_col: str = "ret", periods_per_year: int | None = None) -> BacktestResult:
    """Simulate ``config`` over the dates of ``returns``.

    ``factors`` must contain a column named ``config.factor``; its values are
    carried forward (as-of) onto the return dates.
    """
    if config.factor not in factors:
        raise SchemaError(f"factor column {config.factor!r} not found")
    if return_col not in returns:
        raise SchemaError(f"return column {return_col!r} not found")
    clock = np.unique(returns.dates)
    assets = returns.assets
    F = _dense(factors, config.factor, assets, clock, exact=False)
    R = _dense(returns, return_col, assets, clock, exact=True)
    if len(clock) == 0 or np.isnan(F).all():
        raise EmptyUniverseError("no factor values dated on or before any return date")
    mask = rebalance_mask(clock, config.rebalance)
    targets = np.zeros_like(F)
    records = []
    for t in np.flatnonzero(mask):
        targets[t] = select_weights(F[t], config)
        held = np.flatnonzero(targets[t])
        records.append((str(clock[t]), {str(assets[i]): float(targets[t, i]) for i in held}))
    capital, turnover, fees, nulls = _core.simulate(
        targets, mask, np.ascontiguousarray(R), config.fee_bps / 10000.0, float(config.initial_capital))
    curve = EquityCurve(clock, capital)
    report = compute_metrics(curve, config.risk_free_rate, periods_per_year)
    report.total_turnover = float(turnover.sum())
    report.total_fees = float(fees.sum())
    report.null_return_hits = int(nulls)
    report.weights = records
    return BacktestResult(config, curve, report)

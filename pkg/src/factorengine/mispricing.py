"""The eleven Stambaugh-Yuan mispricing factors.

All factors run on a monthly, gap-free panel (``MispricingFactors`` resamples
to month-ends and inserts null rows for missing months), so an ``Nmo`` lag
always lands exactly N rows back within an asset. Zero or negative
denominators give null.

Accounting inputs can be shifted by a global ``accounting_lag`` (months) to
model reporting delays. It defaults to 0, i.e. a value dated t is treated as
known at t.
"""

from __future__ import annotations

import math
import os
from dataclasses import MISSING, dataclass, fields
from importlib import resources
from typing import Mapping

import numpy as np

from .errors import ParameterError, ParseError
from .expr import product, ratio, sum_exprs
from .lags import Lag, shift_back
from .panel import Frequency, PanelFrame, asof_positions, read_table, take, tomllib
from .registry import ALL, FactorEngine, FactorResult, advanced_factor, simple_factor

# Sign convention for ranking: lower_is_better means high values are overpriced.
DIRECTIONS = {
    "net_stock_issues": "lower_is_better",
    "composite_equity_issues": "lower_is_better",
    "accruals": "lower_is_better",
    "net_operating_assets": "lower_is_better",
    "asset_growth": "lower_is_better",
    "investment_to_assets": "lower_is_better",
    "distress": "lower_is_better",
    "o_score": "lower_is_better",
    "momentum": "higher_is_better",
    "gross_profitability": "higher_is_better",
    "roa": "higher_is_better",
}

# Geometric decay used by the distress averages (weight halves every quarter).
PHI = 2.0 ** (-1.0 / 3.0)


@dataclass(frozen=True)
class OScoreCoefficients:
    intercept: float
    size: float
    tlta: float
    wcta: float
    clca: float
    oeneg: float
    nita: float
    futl: float
    intwo: float
    chin: float
    ffo_proxy: bool = False

    TERMS = ("size", "tlta", "wcta", "clca", "oeneg", "nita", "futl", "intwo", "chin")


@dataclass(frozen=True)
class DistressCoefficients:
    intercept: float
    nimtaavg: float
    tlmta: float
    exretavg: float
    sigma: float
    rsize: float
    cashmta: float
    mb: float
    price: float
    price_cap: float = 15.0

    TERMS = ("nimtaavg", "tlmta", "exretavg", "sigma", "rsize", "cashmta", "mb", "price")


@dataclass(frozen=True)
class Coefficients:
    oscore: OScoreCoefficients | None = None
    distress: DistressCoefficients | None = None


def _section(cls, data, name):
    if data is None:
        return None
    required = [f.name for f in fields(cls) if f.default is MISSING]
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ParameterError(f"[{name}] has unknown key(s) {sorted(unknown)}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ParameterError(f"[{name}] is missing coefficient(s) {missing}")
    vals = {}
    for k, v in data.items():
        if k == "ffo_proxy":
            vals[k] = bool(v)
            continue
        v = float(v)
        if not math.isfinite(v):
            raise ParameterError(f"[{name}] {k} must be finite")
        vals[k] = v
    return cls(**vals)


def load_coefficients(source="bundled") -> Coefficients:
    """Load ``[oscore]`` / ``[distress]`` sections from TOML/JSON, a mapping, or the bundled defaults.

    ``None`` gives empty coefficients, so both model-based factors are skipped.
    """
    if source is None:
        return Coefficients()
    if isinstance(source, Coefficients):
        return source
    if isinstance(source, str) and source == "bundled":
        raw = resources.files("factorengine").joinpath("data/coefficients.toml").read_text()
        data = tomllib.loads(raw)
    elif isinstance(source, Mapping):
        data = source
    else:
        path = os.fspath(source)
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            if path.endswith(".json"):
                import json
                data = json.loads(raw)
            else:
                data = tomllib.loads(raw.decode("utf-8"))
        except ValueError as exc:
            raise ParseError(f"cannot parse coefficients {path}: {exc}") from None
    return Coefficients(_section(OScoreCoefficients, data.get("oscore"), "oscore"),
                        _section(DistressCoefficients, data.get("distress"), "distress"))


def logistic(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def linear_predictor(coefs, terms: Mapping[str, np.ndarray]):
    """intercept + sum(coef * term), summed in the coefficient set's term order."""
    out = coefs.intercept
    for t in coefs.TERMS:
        out = out + getattr(coefs, t) * np.asarray(terms[t], dtype=np.float64)
    return out


def _div(a, b):
    b = np.where(b > 0, b, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        return a / b


def _log(x):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log(np.where(x > 0, x, np.nan))


def _indicator(cond, *inputs):
    out = cond.astype(np.float64)
    for x in inputs:
        out = np.where(np.isnan(x), np.nan, out)
    return out


def o_score_terms(ta, tl, ca, cl, ni, ni_lag, ffo) -> dict[str, np.ndarray]:
    """The nine O-score ratios. Size is ln(ta) with no price-level deflator."""
    ta, tl, ca, cl, ni, ni_lag, ffo = (np.asarray(x, dtype=np.float64)
                                       for x in (ta, tl, ca, cl, ni, ni_lag, ffo))
    with np.errstate(invalid="ignore"):
        return {
            "size": _log(ta),
            "tlta": _div(tl, ta),
            "wcta": _div(ca - cl, ta),
            "clca": _div(cl, ca),
            "oeneg": _indicator(tl > ta, tl, ta),
            "nita": _div(ni, ta),
            "futl": _div(ffo, tl),
            "intwo": _indicator((ni < 0) & (ni_lag < 0), ni, ni_lag),
            "chin": _div(ni - ni_lag, np.abs(ni) + np.abs(ni_lag)),
        }


def distress_weights(n: int, step: int = 1) -> np.ndarray:
    """Normalised geometric weights phi**(step*k), k = 0..n-1, over a 12-month span."""
    k = np.arange(n)
    return (1 - PHI ** step) / (1 - PHI ** 12) * PHI ** (step * k)


def _index_frame(index) -> PanelFrame:
    if isinstance(index, PanelFrame):
        table = {"date": index.dates, **{c: index[c] for c in index.columns}}
    elif hasattr(index, "columns") and hasattr(index, "to_numpy"):
        table = {c: index[c].to_numpy() for c in index.columns}
    else:
        table = read_table(index)
    if "date" not in table or "mv" not in table or not ("ret" in table or "level" in table):
        raise ParameterError("index table needs columns date, mv and ret (or level)")
    dates = np.asarray(table["date"]).astype("datetime64[D]")
    order = np.argsort(dates, kind="stable")
    dates = dates[order]

    def num(name):
        a = np.asarray(table[name])[order]
        if a.dtype.kind in "fiub":
            return a.astype(np.float64)
        return np.array([float(x) if str(x).strip() else np.nan for x in a])

    mv = num("mv")
    if "ret" in table:
        ret = num("ret")
    else:
        level = num("level")
        ret = np.concatenate(([np.nan], level[1:] / level[:-1] - 1))
    return PanelFrame(np.full(len(dates), "__index__"), dates, {"ret": ret, "mv": mv})


def _distress_offsets(engine, **_):
    a = engine.accounting_lag
    pairs = [("ret", k) for k in range(12)]
    for q in (0, 3, 6, 9):
        pairs += [("ni", q + a), ("tl", q + a), ("mv", q)]
    pairs += [("cash", a), ("ta", a)]
    return pairs


def _oscore_offsets(engine, **_):
    a = engine.accounting_lag
    pairs = [(c, a) for c in ("ta", "tl", "ca", "cl", "ni")] + [("ni", a + 12)]
    if "ffo" in engine.data:
        pairs.append(("ffo", a))
    else:
        pairs.append(("dp", a))
    return pairs


class MispricingFactors(FactorEngine):
    """Factor engine preloaded with the eleven mispricing factors.

    ``coefficients`` feeds the O-score and distress models (defaults ship with
    the package; pass ``None`` to disable both). ``accounting_lag`` delays every
    accounting input by that many months.
    """

    freq = Frequency.MONTHLY

    def __init__(self, data, *args, coefficients="bundled", accounting_lag: int = 0, **kwargs):
        super().__init__(data, *args, **kwargs)
        if int(accounting_lag) != accounting_lag or accounting_lag < 0:
            raise ParameterError("accounting_lag must be a non-negative whole number of months")
        self.accounting_lag = int(accounting_lag)
        self.coefficients = load_coefficients(coefficients)

    def acc(self, months: int) -> int:
        """Lag in months for an accounting input, including the reporting delay."""
        return months + self.accounting_lag

    def compute_with_warnings(self, names=ALL, *, params=None, **kwargs):
        # ``sp500`` is accepted as another name for the index table
        if "sp500" in kwargs:
            if "index" in kwargs:
                raise ParameterError("pass the index table as either index= or sp500=, not both")
            kwargs["index"] = kwargs.pop("sp500")
        return super().compute_with_warnings(names, params=params, **kwargs)

    def missing_inputs(self, fdef, extras):
        missing = super().missing_inputs(fdef, extras)
        co = self.coefficients
        if fdef.name == "o_score":
            if co.oscore is None:
                missing.append("config:oscore")
            elif "ffo" in missing and co.oscore.ffo_proxy and "dp" in self.data:
                missing.remove("ffo")
        if fdef.name == "distress" and co.distress is None:
            missing.append("config:distress")
        return missing

    @simple_factor(name="net_stock_issues", requires=["shares"])
    def net_stock_issues(self):
        """Annual log change in split-adjusted shares outstanding."""
        return ratio(self.col("shares").positive(), self.col("shares", 12)).log()

    @simple_factor(name="composite_equity_issues", requires=["mv", "ret"])
    def composite_equity_issues(self, lag=12):
        """Log growth in market equity not explained by the cumulative log return."""
        n = Lag.parse(lag).months
        if n < 1:
            raise ParameterError("composite_equity_issues needs a window of at least one month")
        growth = ratio(self.col("mv").positive(), self.col("mv", n)).log()
        cum = sum_exprs((1 + self.col("ret", k)).log() for k in range(n))
        return growth - cum

    @simple_factor(name="accruals", requires=["ca", "cash", "cl", "std", "txp", "dp", "ta"])
    def accruals(self):
        a, b = self.acc(0), self.acc(12)

        def delta(c):
            return self.col(c, a) - self.col(c, b)

        num = (delta("ca") - delta("cash")) - (delta("cl") - delta("std") - delta("txp")) - self.col("dp", a)
        return ratio(num, (self.col("ta", a) + self.col("ta", b)) / 2)

    @simple_factor(name="net_operating_assets", requires=["ta", "cash", "std", "ltd", "ceq"])
    def net_operating_assets(self):
        a = self.acc(0)
        ta = self.col("ta", a)
        op_assets = ta - self.col("cash", a)
        op_liabs = ta - self.col("std", a) - self.col("ltd", a) - self.col("ceq", a)
        return ratio(op_assets - op_liabs, self.col("ta", self.acc(12)))

    @simple_factor(name="asset_growth", requires=["ta"])
    def asset_growth(self):
        return ratio(self.col("ta", self.acc(0)), self.col("ta", self.acc(12))) - 1

    @simple_factor(name="investment_to_assets", requires=["ppegt", "invt", "ta"])
    def investment_to_assets(self):
        a, b = self.acc(0), self.acc(12)
        d_ppe = self.col("ppegt", a) - self.col("ppegt", b)
        d_inv = self.col("invt", a) - self.col("invt", b)
        return ratio(d_ppe + d_inv, self.col("ta", b))

    @advanced_factor(name="distress", requires=["mv", "ret", "price", "ni", "ta", "tl", "cash"],
                     extras=["index"], offsets=_distress_offsets)
    def distress(self, df, index=None):
        """Failure probability from a dynamic logit on market and accounting covariates.

        The volatility covariate is approximated as the annualised sample std
        of the last three monthly returns (no daily data required).
        """
        if index is None:
            raise ParameterError("distress needs an index table (date, ret or level, mv)")
        co = self.coefficients.distress
        idx = _index_frame(index)
        n = len(df)
        a = self.accounting_lag
        col = lambda c, k: df[self.lag_name(c, k)]  # noqa: E731

        def index_at(name, k):
            pos = asof_positions(idx, np.full(n, "__index__"), shift_back(df.dates, Lag(k)))
            return take(idx[name], pos)

        w = distress_weights(12)
        exret = 0.0
        for k in range(12):
            exret = exret + w[k] * (_log(1 + col("ret", k)) - _log(1 + index_at("ret", k)))
        wq = distress_weights(4, step=3)
        nimta = 0.0
        for j, q in enumerate((0, 3, 6, 9)):
            nimta = nimta + wq[j] * _div(col("ni", q + a), col("mv", q) + col("tl", q + a))
        r3 = np.stack([col("ret", k) for k in range(3)])
        sigma = np.sqrt(12.0) * np.sqrt(((r3 - r3.mean(axis=0)) ** 2).sum(axis=0) / 2.0)
        mv, tl = df["mv"], col("tl", a)
        mta = mv + tl
        terms = {
            "nimtaavg": nimta,
            "tlmta": _div(tl, mta),
            "exretavg": exret,
            "sigma": sigma,
            "rsize": _log(_div(mv, index_at("mv", 0))),
            "cashmta": _div(col("cash", a), mta),
            "mb": _div(mv, col("ta", a) - tl),
            "price": _log(np.minimum(df["price"], co.price_cap)),
        }
        p = logistic(linear_predictor(co, terms))
        meta = {"sigma": "approximation: annualised 3-month std of monthly returns"}
        return FactorResult(df.ids, df.dates, "distress", p, meta=meta, _trusted=True)

    @advanced_factor(name="o_score", requires=["ta", "tl", "ca", "cl", "ni", "ffo"],
                     offsets=_oscore_offsets)
    def o_score(self, df):
        """Ohlson's static bankruptcy score (size term is ln(total assets), undeflated)."""
        co = self.coefficients.oscore
        a = self.accounting_lag
        col = lambda c, k=a: df[self.lag_name(c, k)]  # noqa: E731
        ffo = col("ffo") if "ffo" in df else col("ni") + col("dp")
        terms = o_score_terms(col("ta"), col("tl"), col("ca"), col("cl"), col("ni"),
                              col("ni", a + 12), ffo)
        return FactorResult(df.ids, df.dates, "o_score", linear_predictor(co, terms), _trusted=True)

    @simple_factor(name="momentum", requires=["ret"])
    def momentum(self, lag=12):
        """Compounded return over months t-lag .. t-2; null if any month is missing."""
        n = Lag.parse(lag).months
        if n < 2:
            raise ParameterError("momentum window must start at least 2 months back")
        return product(1 + self.col("ret", k) for k in range(2, n + 1)) - 1

    @simple_factor(name="gross_profitability", requires=["gp", "ta"])
    def gross_profitability(self):
        return ratio(self.col("gp", self.acc(0)), self.col("ta", self.acc(0)))

    @simple_factor(name="roa", requires=["ibq", "ta"])
    def roa(self, lag=3):
        return ratio(self.col("ibq", self.acc(0)), self.col("ta", self.acc(Lag.parse(lag).months)))


"""Independent reference implementations used to cross-check the engine.

Everything here is deliberately plain Python: per-row loops over dicts and
lists, the ``calendar`` module for month arithmetic, and literature
coefficients typed in directly. Nothing in this file imports the engine's
numeric code paths.
"""

import calendar
import datetime as dt
import math

# Ohlson (1980) model 1 and Campbell-Hilscher-Szilagyi (2008) 12-month logit.
OHLSON = {"intercept": -1.32, "size": -0.407, "tlta": 6.03, "wcta": -1.43, "clca": 0.0757,
          "oeneg": -1.72, "nita": -2.37, "futl": -1.83, "intwo": 0.285, "chin": -0.521}
CHS = {"intercept": -9.164, "nimtaavg": -20.264, "tlmta": 1.416, "exretavg": -7.129,
       "sigma": 1.411, "rsize": -0.045, "cashmta": -2.132, "mb": 0.075, "price": -0.058}
PRICE_CAP = 15.0


# ---------------------------------------------------------------- dates

def to_date(x) -> dt.date:
    return dt.date.fromisoformat(str(x)[:10])


def minus_months(d: dt.date, k: int) -> dt.date:
    """d minus k months; a month-end date maps to the target month's end."""
    y, m = divmod(d.year * 12 + (d.month - 1) - k, 12)
    m += 1
    last = calendar.monthrange(y, m)[1]
    if d.day == calendar.monthrange(d.year, d.month)[1]:
        return dt.date(y, m, last)
    return dt.date(y, m, min(d.day, last))


def shift(d: dt.date, count: int, unit: str) -> dt.date:
    if unit == "d":
        return d - dt.timedelta(days=count)
    if unit == "mo":
        return minus_months(d, count)
    if unit == "y":
        return minus_months(d, 12 * count)
    raise ValueError(unit)


# ---------------------------------------------------------------- as-of

def asof_bruteforce(rows, count, unit, columns, max_staleness_days=None):
    """O(n^2) scan. ``rows`` is a list of dicts with id, date and the columns.

    For every row, look at every row of the same id and keep the latest one
    dated at or before date - lag.
    """
    by_id = {}
    for r in rows:
        by_id.setdefault(r["id"], []).append(r)
    out = []
    for r in rows:
        target = shift(r["date"], count, unit)
        best = None
        for s in by_id[r["id"]]:
            if s["date"] > target:
                continue
            if max_staleness_days is not None and (target - s["date"]).days > max_staleness_days:
                continue
            if best is None or s["date"] > best["date"]:
                best = s
        out.append({c: (None if best is None else best[c]) for c in columns})
    return out


# ---------------------------------------------------------------- quantiles / stats

def nearest_rank_quantile(values, q):
    xs = sorted(v for v in values if v is not None)
    n = len(xs)
    rank = math.ceil(round(q * n, 9))
    rank = min(max(rank, 1), n)
    return xs[rank - 1]


def population_zscore(values):
    xs = [v for v in values if v is not None]
    if len(xs) < 2:
        return [None] * len(values)
    mean = sum(xs) / len(xs)
    sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / len(xs))
    if sd == 0:
        return [None] * len(values)
    return [None if v is None else (v - mean) / sd for v in values]


# ---------------------------------------------------------------- factors

def _ok(*xs):
    return all(x is not None and math.isfinite(x) for x in xs)


def _div(a, b):
    if not _ok(a, b) or b <= 0:
        return None
    return a / b


def _ln(x):
    if not _ok(x) or x <= 0:
        return None
    return math.log(x)


def _clean(x):
    return x if x is not None and math.isfinite(x) else None


class AssetHistory:
    """One asset's monthly history keyed by (year, month)."""

    def __init__(self, rows):
        self.by_month = {(r["date"].year, r["date"].month): r for r in rows}
        keys = sorted(self.by_month)
        self.first, self.last = keys[0], keys[-1]

    def months(self):
        y, m = self.first
        while (y, m) <= self.last:
            yield y, m
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)

    def get(self, col, ym, k=0):
        y, m = divmod(ym[0] * 12 + ym[1] - 1 - k, 12)
        row = self.by_month.get((y, m + 1))
        if row is None:
            return None
        v = row.get(col)
        return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def f_net_stock_issues(h, ym):
    return _ln(_div(h.get("shares", ym), h.get("shares", ym, 12))) if _ok(h.get("shares", ym)) and h.get("shares", ym) > 0 else None


def f_composite_equity_issues(h, ym, n=12):
    mv, mv_lag = h.get("mv", ym), h.get("mv", ym, n)
    if not _ok(mv, mv_lag) or mv <= 0 or mv_lag <= 0:
        return None
    total = 0.0
    for k in range(n):
        r = h.get("ret", ym, k)
        if not _ok(r) or 1 + r <= 0:
            return None
        total += math.log(1 + r)
    return math.log(mv / mv_lag) - total


def f_accruals(h, ym):
    g = lambda c, k=0: h.get(c, ym, k)  # noqa: E731
    vals = [g(c) for c in ("ca", "cash", "cl", "std", "txp", "dp", "ta")]
    lags = [g(c, 12) for c in ("ca", "cash", "cl", "std", "txp", "ta")]
    if not _ok(*vals, *lags):
        return None
    d = {c: g(c) - g(c, 12) for c in ("ca", "cash", "cl", "std", "txp")}
    num = (d["ca"] - d["cash"]) - (d["cl"] - d["std"] - d["txp"]) - g("dp")
    return _div(num, (g("ta") + g("ta", 12)) / 2)


def f_net_operating_assets(h, ym):
    ta, cash, std, ltd, ceq = (h.get(c, ym) for c in ("ta", "cash", "std", "ltd", "ceq"))
    if not _ok(ta, cash, std, ltd, ceq):
        return None
    return _div((ta - cash) - (ta - std - ltd - ceq), h.get("ta", ym, 12))


def f_asset_growth(h, ym):
    q = _div(h.get("ta", ym), h.get("ta", ym, 12))
    return None if q is None else q - 1


def f_investment_to_assets(h, ym):
    p0, p1, i0, i1 = h.get("ppegt", ym), h.get("ppegt", ym, 12), h.get("invt", ym), h.get("invt", ym, 12)
    if not _ok(p0, p1, i0, i1):
        return None
    return _div((p0 - p1) + (i0 - i1), h.get("ta", ym, 12))


def f_momentum(h, ym, n=12):
    prod = 1.0
    for k in range(2, n + 1):
        r = h.get("ret", ym, k)
        if not _ok(r):
            return None
        prod *= 1 + r
    return prod - 1


def f_gross_profitability(h, ym):
    return _div(h.get("gp", ym), h.get("ta", ym))


def f_roa(h, ym, lag=3):
    ibq = h.get("ibq", ym)
    if not _ok(ibq):
        return None
    return _div(ibq, h.get("ta", ym, lag))


def o_score_row(ta, tl, ca, cl, ni, ni_lag, ffo, coefs=OHLSON):
    """Term-by-term evaluation of the O-score for one observation."""
    if not _ok(ta, tl, ca, cl, ni, ni_lag, ffo):
        return None
    terms = {
        "size": _ln(ta),
        "tlta": _div(tl, ta),
        "wcta": _div(ca - cl, ta),
        "clca": _div(cl, ca),
        "oeneg": 1.0 if tl > ta else 0.0,
        "nita": _div(ni, ta),
        "futl": _div(ffo, tl),
        "intwo": 1.0 if (ni < 0 and ni_lag < 0) else 0.0,
        "chin": _div(ni - ni_lag, abs(ni) + abs(ni_lag)),
    }
    if any(v is None for v in terms.values()):
        return None
    total = coefs["intercept"]
    for name in ("size", "tlta", "wcta", "clca", "oeneg", "nita", "futl", "intwo", "chin"):
        total += coefs[name] * terms[name]
    return _clean(total)


def f_o_score(h, ym):
    g = lambda c, k=0: h.get(c, ym, k)  # noqa: E731
    return o_score_row(g("ta"), g("tl"), g("ca"), g("cl"), g("ni"), g("ni", 12), g("ffo"))


def index_asof(index_rows, target: dt.date, col):
    best = None
    for r in index_rows:
        if r["date"] <= target and (best is None or r["date"] > best["date"]):
            best = r
    if best is None:
        return None
    v = best[col]
    return None if v is None or math.isnan(v) else v


def distress_row(cov, coefs=CHS):
    lp = coefs["intercept"]
    for name in ("nimtaavg", "tlmta", "exretavg", "sigma", "rsize", "cashmta", "mb", "price"):
        lp += coefs[name] * cov[name]
    try:
        return 1.0 / (1.0 + math.exp(-lp))
    except OverflowError:
        return 0.0


def f_distress(h, ym, index_rows):
    phi = 2.0 ** (-1.0 / 3.0)
    g = lambda c, k=0: h.get(c, ym, k)  # noqa: E731
    row_date = h.by_month.get(ym, {}).get("date")
    if row_date is None:
        last = calendar.monthrange(*ym)[1]
        row_date = dt.date(ym[0], ym[1], last)

    exret = 0.0
    for k in range(12):
        r = g("ret", k)
        ri = index_asof(index_rows, minus_months(row_date, k), "ret")
        a, b = (_ln(1 + r) if _ok(r) else None), (_ln(1 + ri) if _ok(ri) else None)
        if a is None or b is None:
            return None
        exret += (1 - phi) / (1 - phi ** 12) * phi ** k * (a - b)

    nimta = 0.0
    for j, q in enumerate((0, 3, 6, 9)):
        ni, mv, tl = g("ni", q), g("mv", q), g("tl", q)
        if not _ok(ni, mv, tl):
            return None
        x = _div(ni, mv + tl)
        if x is None:
            return None
        nimta += (1 - phi ** 3) / (1 - phi ** 12) * phi ** (3 * j) * x

    r3 = [g("ret", k) for k in range(3)]
    if not _ok(*r3):
        return None
    mean3 = sum(r3) / 3
    sigma = math.sqrt(12.0) * math.sqrt(sum((x - mean3) ** 2 for x in r3) / 2)

    mv, tl, ta, cash, price = g("mv"), g("tl"), g("ta"), g("cash"), g("price")
    if not _ok(mv, tl, ta, cash, price):
        return None
    index_mv = index_asof(index_rows, row_date, "mv")
    cov = {
        "nimtaavg": nimta,
        "tlmta": _div(tl, mv + tl),
        "exretavg": exret,
        "sigma": sigma,
        "rsize": _ln(_div(mv, index_mv)) if _ok(index_mv) else None,
        "cashmta": _div(cash, mv + tl),
        "mb": _div(mv, ta - tl),
        "price": _ln(min(price, PRICE_CAP)),
    }
    if any(v is None for v in cov.values()):
        return None
    return _clean(distress_row(cov))


FACTORS = {
    "net_stock_issues": f_net_stock_issues,
    "composite_equity_issues": f_composite_equity_issues,
    "accruals": f_accruals,
    "net_operating_assets": f_net_operating_assets,
    "asset_growth": f_asset_growth,
    "investment_to_assets": f_investment_to_assets,
    "distress": f_distress,
    "o_score": f_o_score,
    "momentum": f_momentum,
    "gross_profitability": f_gross_profitability,
    "roa": f_roa,
}


def panel_rows(ids, dates, columns):
    """Turn column arrays into a list of row dicts with dt.date dates and None for null."""
    rows = []
    for i in range(len(ids)):
        row = {"id": str(ids[i]), "date": to_date(dates[i])}
        for c, vals in columns.items():
            v = float(vals[i])
            row[c] = None if math.isnan(v) else v
        rows.append(row)
    return rows


def compute_all(rows, index_rows=None, names=None):
    """{factor: {(id, 'YYYY-MM-DD'): value-or-None}} over every month of each asset's span.

    Gap months (inside the span but absent from the panel) are labelled with
    the calendar month-end.
    """
    names = names or list(FACTORS)
    by_id = {}
    for r in rows:
        by_id.setdefault(r["id"], []).append(r)
    out = {n: {} for n in names}
    for ident in sorted(by_id):
        h = AssetHistory(by_id[ident])
        for ym in h.months():
            label = dt.date(ym[0], ym[1], calendar.monthrange(*ym)[1]).isoformat()
            for n in names:
                if n == "distress":
                    v = f_distress(h, ym, index_rows) if index_rows is not None else None
                else:
                    v = FACTORS[n](h, ym)
                out[n][(ident, label)] = v
    return out


def factor_file_text(values):
    """Render oracle output in the id,date,factor,value layout."""
    lines = ["id,date,factor,value"]
    for name in sorted(values):
        for (ident, date) in sorted(values[name]):
            v = values[name][(ident, date)]
            lines.append(f"{ident},{date},{name},{'' if v is None else format(v, '.17g')}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- backtest

def simulate_backtest(factor_rows, return_rows, *, direction="higher_is_better", mode="long_only",
                      selection=0.1, fee_bps=100.0, capital=1.0, rebalance="daily"):
    """Step-by-step dict simulation.

    factor_rows / return_rows: lists of (id, dt.date, value-or-None).
    Returns (dates, capital list).
    """
    clock = sorted({d for _, d, _ in return_rows})
    assets = sorted({i for i, _, _ in return_rows})
    rets = {(i, d): v for i, d, v in return_rows}
    fac_by_id = {}
    for i, d, v in factor_rows:
        fac_by_id.setdefault(i, []).append((d, v))

    def latest_factor(i, d):
        best = None
        for fd, v in fac_by_id.get(i, []):
            if fd <= d and (best is None or fd > best[0]):
                best = (fd, v)
        return None if best is None else best[1]

    def pick(d):
        cs = [(i, latest_factor(i, d)) for i in assets]
        cs = [(i, v) for i, v in cs if v is not None]
        n = len(cs)
        if n == 0:
            return {}
        if selection == "all":
            k = n
        elif isinstance(selection, int):
            k = min(selection, n)
        else:
            k = max(1, min(n, math.floor(round(selection * n, 9))))
        sign = 1 if direction == "higher_is_better" else -1
        if mode == "long_short":
            k = min(k, n // 2)
            if k == 0:
                return {}
        ranked = sorted(cs, key=lambda iv: (-sign * iv[1], iv[0]))
        w = {i: 1.0 / k for i, _ in ranked[:k]}
        if mode == "long_short":
            rest = sorted(ranked[k:], key=lambda iv: (sign * iv[1], iv[0]))
            for i, _ in rest[:k]:
                w[i] = -1.0 / k
        return w

    c = float(capital)
    held = {}
    curve = [c]
    for t in range(1, len(clock)):
        if c <= 0:
            curve.append(0.0)
            continue
        prev_d = clock[t - 1]
        do_rebalance = rebalance == "daily" or t - 1 == 0 or (prev_d.year, prev_d.month) != (
            clock[t - 2].year, clock[t - 2].month)
        if do_rebalance:
            target = pick(prev_d)
            tv = 0.0
            for i in assets:  # left-to-right in id order, like the engine
                tv += abs(target.get(i, 0.0) - held.get(i, 0.0))
            c -= c * tv * fee_bps / 10000.0
            held = dict(target)
        growth = 1.0
        for i in assets:
            if held.get(i, 0.0) != 0.0:
                r = rets.get((i, clock[t]))
                if r is not None:
                    growth += held[i] * r
        c *= growth
        if c <= 0:
            c = 0.0
            held = {}
        else:
            held = {i: w * (1 + (rets.get((i, clock[t])) or 0.0)) / growth
                    for i, w in held.items() if w != 0.0}
        curve.append(c)
    return clock, curve

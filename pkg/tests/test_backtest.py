import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from factorengine import EmptyUniverseError, ParameterError, PanelFrame, SchemaError
from factorengine.backtest import (EquityCurve, StrategyConfig, compute_metrics, infer_periods_per_year,
                                   rank_and_select, rebalance_mask, run_backtest, select_weights, step)

from helpers import as_rows, daily_panel


def cfg(**kw):
    kw.setdefault("fee_bps", 0.0)
    return StrategyConfig("f", **kw)


# selection

def test_rank_and_select_examples():
    cs = {"A": 3.0, "B": 2.0, "C": 1.0}
    assert rank_and_select(cs, cfg(selection=1)) == {"A": 1.0}
    assert rank_and_select(cs, cfg(selection=1, mode="long_short")) == {"A": 1.0, "C": -1.0}
    assert rank_and_select({"A": 1.0, "B": 1.0}, cfg(selection=1)) == {"A": 1.0}
    assert rank_and_select(cs, cfg(selection=1, direction="lower_is_better")) == {"C": 1.0}


def test_select_excludes_nulls_and_empty():
    assert rank_and_select({"A": None, "B": 2.0}, cfg(selection=1)) == {"B": 1.0}
    assert rank_and_select({"A": None}, cfg(selection=1)) == {}
    assert rank_and_select({"A": 1.0}, cfg(selection=1, mode="long_short")) == {}


def test_selection_fraction_and_all():
    vals = np.arange(20.0)
    w = select_weights(vals, cfg(selection=0.1))
    assert (w > 0).sum() == 2 and w[-2:].tolist() == [0.5, 0.5]
    w = select_weights(vals, cfg(selection="all"))
    np.testing.assert_array_equal(w, np.full(20, 1 / 20))
    w = select_weights(vals, cfg(selection="all", mode="long_short"))
    assert (w > 0).sum() == 10 and (w < 0).sum() == 10 and w.sum() == pytest.approx(0, abs=1e-15)


def test_config_validation():
    for bad in (dict(fee_bps=-1), dict(selection=0), dict(selection=1.5), dict(selection="most"),
                dict(initial_capital=0), dict(selection=True)):
        with pytest.raises(ParameterError):
            cfg(**bad)
    with pytest.raises(ValueError):
        cfg(mode="sideways")
    with pytest.raises(ParameterError):
        StrategyConfig.from_dict("f", {"leverage": 2})


# step

def test_step_fee_before_returns():
    new, realized, info = step(1.0, {}, {"A": 1.0}, {"A": 0.0}, 100)
    assert info["fee"] == 0.01 and info["turnover"] == 1.0
    assert new == 0.99


def test_step_compounding():
    c, w, _ = step(1.0, {}, {"A": 1.0}, {"A": 0.01}, 0)
    c, w, _ = step(c, w, {"A": 1.0}, {"A": 0.01}, 0)
    assert c == pytest.approx(1.0201, abs=1e-15)


def test_step_long_short_wipeout():
    c, w, _ = step(1.0, {}, {"A": 1.0, "B": -1.0}, {"A": -0.5, "B": 0.6}, 0)
    assert c == 0.0 and w == {}
    c, w, info = step(c, w, {"A": 1.0}, {"A": 0.5}, 100)
    assert c == 0.0 and info["fee"] == 0.0


def test_step_null_return_counts():
    c, w, info = step(1.0, {}, {"A": 0.5, "B": 0.5}, {"A": 0.1}, 0)
    assert info["null_returns"] == 1 and c == pytest.approx(1.05, abs=1e-15)
    with pytest.raises(ParameterError):
        step(-1.0, {}, {}, {}, 0)


# run_backtest

def test_single_asset_is_buy_and_hold():
    rng = np.random.default_rng(0)
    factors, returns = daily_panel(rng, 1, 120)
    factors = factors.with_columns({"f": np.ones(len(factors))})
    res = run_backtest(factors, returns, cfg(selection=1))
    r = returns["ret"]
    first = int(np.argmax(res.curve.capital != 1.0)) if (res.curve.capital != 1.0).any() else 0
    assert first >= 1
    held_from = first  # factor becomes available before this return date
    expected = np.concatenate((np.ones(held_from), np.cumprod(1 + r[held_from:])))
    np.testing.assert_allclose(res.curve.capital, expected, rtol=1e-12, atol=0)


def test_constant_factor_select_all_is_equal_weight():
    rng = np.random.default_rng(1)
    factors, returns = daily_panel(rng, 5, 80)
    factors = factors.with_columns({"f": np.ones(len(factors))})
    res = run_backtest(factors, returns, cfg(selection="all"))
    R = returns["ret"].reshape(5, 80).T
    live = res.curve.capital != 1.0
    start = int(np.argmax(live))
    expected = np.concatenate((np.ones(start), np.cumprod(1 + R[start:].mean(axis=1))))
    np.testing.assert_allclose(res.curve.capital, expected, rtol=1e-12, atol=0)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("mode", ["long_only", "long_short"])
@pytest.mark.parametrize("rebalance", ["daily", "monthly"])
def test_matches_simulation_oracle(seed, mode, rebalance):
    rng = np.random.default_rng(seed)
    factors, returns = daily_panel(rng, 7, 70, null_rate=0.05)
    config = StrategyConfig("f", direction="lower_is_better" if seed % 2 else "higher_is_better",
                            mode=mode, selection=2, fee_bps=25.0, rebalance=rebalance)
    res = run_backtest(factors, returns, config)
    dates, curve = oracle.simulate_backtest(as_rows(factors, "f"), as_rows(returns, "ret"),
                                            direction=config.direction.value, mode=mode, selection=2,
                                            fee_bps=25.0, rebalance=rebalance)
    assert [d.isoformat() for d in dates] == res.curve.dates.astype(str).tolist()
    np.testing.assert_allclose(res.curve.capital, curve, rtol=1e-12, atol=0)


def test_empty_universe():
    rng = np.random.default_rng(2)
    factors, returns = daily_panel(rng, 3, 20)
    late = PanelFrame(factors.ids, factors.dates + 3650, {"f": factors["f"]})
    with pytest.raises(EmptyUniverseError):
        run_backtest(late, returns, cfg())
    with pytest.raises(SchemaError):
        run_backtest(factors, returns, StrategyConfig("other"))
    with pytest.raises(SchemaError):
        run_backtest(factors, returns, cfg(), return_col="r")


def test_report_fields_and_weights_record():
    rng = np.random.default_rng(3)
    factors, returns = daily_panel(rng, 6, 50, null_rate=0.05)
    res = run_backtest(factors, returns, StrategyConfig("f", selection=2))
    d = res.report.to_dict()
    for k in ("total_return", "annualized_return", "volatility", "sharpe", "max_drawdown", "final_capital"):
        assert k in d
    assert 0.0 <= d["max_drawdown"] <= 1.0
    assert d["periods_per_year"] == 252
    assert res.report.total_fees > 0 and res.report.null_return_hits >= 0
    date, weights = res.report.weights[-1]
    assert len(weights) == 2 and sum(weights.values()) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["long_only", "long_short"]))
def test_capital_nonnegative_and_absorbing(seed, mode):
    rng = np.random.default_rng(seed)
    factors, returns = daily_panel(rng, 4, 40)
    wild = returns.with_columns({"ret": rng.normal(0, 0.6, len(returns))})
    cap = run_backtest(factors, wild, StrategyConfig("f", mode=mode, selection=1, fee_bps=50)).curve.capital
    assert (cap >= 0).all()
    z = np.flatnonzero(cap == 0)
    if len(z):
        assert (cap[z[0]:] == 0).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["exp", "cube", "affine"]))
def test_rank_invariance(seed, transform):
    rng = np.random.default_rng(seed)
    factors, returns = daily_panel(rng, 8, 45)
    f = {"exp": np.exp, "cube": lambda x: x ** 3, "affine": lambda x: 2.5 * x + 7}[transform]
    g = factors.with_columns({"f": f(factors["f"])})
    for mode in ("long_only", "long_short"):
        c = StrategyConfig("f", mode=mode, selection=3, fee_bps=10)
        a, b = run_backtest(factors, returns, c), run_backtest(g, returns, c)
        assert a.report.weights == b.report.weights
        assert a.curve.capital.tobytes() == b.curve.capital.tobytes()


def test_long_short_zero_returns_constant_capital():
    rng = np.random.default_rng(4)
    factors, returns = daily_panel(rng, 6, 30)
    flat = returns.with_columns({"ret": np.zeros(len(returns))})
    cap = run_backtest(factors, flat, StrategyConfig("f", mode="long_short", selection=2, fee_bps=0)).curve.capital
    assert (cap == 1.0).all()


def test_rebalance_mask():
    clock = np.array(["2021-01-04", "2021-01-05", "2021-02-01", "2021-02-02", "2021-03-01"], dtype="datetime64[D]")
    from factorengine.backtest import Rebalance
    assert rebalance_mask(clock, Rebalance.MONTHLY).tolist() == [1, 0, 1, 0, 1]
    assert rebalance_mask(clock, Rebalance.DAILY).tolist() == [1] * 5


# metrics

def curve(values, freq="D"):
    start = np.datetime64("2021-01-01")
    step_days = {"D": 1, "M": 30}[freq]
    return EquityCurve(start + step_days * np.arange(len(values)), np.asarray(values, dtype=float))


def test_metrics_monotone_and_flat():
    r = compute_metrics(curve([1.0, 1.1, 1.2, 1.5]))
    assert r.max_drawdown == 0.0
    flat = compute_metrics(curve([1.0, 1.0, 1.0]))
    assert flat.total_return == 0.0 and flat.volatility == 0.0 and flat.sharpe is None


def test_metrics_drawdown_value():
    r = compute_metrics(curve([1.0, 1.1, 0.99]))
    assert abs(r.max_drawdown - 0.1) <= 4 * np.finfo(float).eps


def test_metrics_short_curve_null():
    r = compute_metrics(curve([1.0]))
    assert r.total_return is None and r.sharpe is None and r.max_drawdown is None


def test_metrics_formulas():
    c = [1.0, 1.02, 0.99, 1.05, 1.07]
    r = compute_metrics(curve(c), 0.05, 12)
    rets = [c[i + 1] / c[i] - 1 for i in range(4)]
    mu = sum(rets) / 4
    vol = math.sqrt(sum((x - mu) ** 2 for x in rets) / 4) * math.sqrt(12)
    ann = (c[-1] / c[0]) ** (12 / 4) - 1
    assert r.total_return == pytest.approx(0.07, abs=1e-15)
    assert r.annualized_return == pytest.approx(ann, rel=1e-14)
    assert r.volatility == pytest.approx(vol, rel=1e-12)
    assert r.sharpe == pytest.approx((ann - 0.05) / vol, rel=1e-12)
    assert r.max_drawdown == pytest.approx((1.02 - 0.99) / 1.02, rel=1e-14)


def test_periods_per_year_inference():
    d = np.datetime64("2021-01-01")
    assert infer_periods_per_year(d + np.arange(10)) == 252
    assert infer_periods_per_year(d + 7 * np.arange(10)) == 52
    assert infer_periods_per_year(np.arange("2021-01", "2022-01", dtype="datetime64[M]").astype("datetime64[D]")) == 12
    assert infer_periods_per_year(d + 91 * np.arange(5)) == 4
    assert infer_periods_per_year(d + 365 * np.arange(5)) == 1

"""Command line entry point: ``factorengine {compute,backtest,validate,synth}``.

Exit codes: 0 success (possibly with warnings), 1 usage, 2 I/O or parse
failure, 3 contract violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import synth
from .backtest import BacktestResult, StrategyConfig, run_backtest
from .errors import (ContractViolation, DefinitionError, FactorLookupError, IntegrityError,
                     ParameterError, ParseError, SchemaError)
from .mispricing import DIRECTIONS, MispricingFactors
from .panel import ColumnSchema, ingest
from .panel import tomllib
from .validation import FactorFile, validate

logger = logging.getLogger("factorengine")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONTRACT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", help="input file (panel for compute, factor file otherwise)")
    p.add_argument("--schema", help="column schema (TOML or JSON)")
    p.add_argument("--output", help="output file or directory")
    p.add_argument("--aux", action="append", default=[], metavar="NAME=PATH",
                   help="auxiliary table, e.g. index=sp500.csv")
    p.add_argument("--factors", help="comma-separated factor names (default: all)")
    p.add_argument("--config", help="coefficient config (compute) or strategy config (backtest)")
    p.add_argument("--seed", type=int, default=synth.DEFAULT_SEED)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="factorengine", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compute", parents=[common], help="compute factors into a factor file")
    c.add_argument("--param", action="append", default=[], metavar="FACTOR.NAME=VALUE",
                   help="factor parameter override, e.g. momentum.lag=6")
    c.add_argument("--accounting-lag", type=int, default=0)

    b = sub.add_parser("backtest", parents=[common], help="single-factor backtests")
    b.add_argument("--returns", help="panel with a ret column (defaults to the --aux returns=PATH entry)")
    b.add_argument("--top", type=int, help="leaderboard size (by Sharpe)")
    b.add_argument("--mode", choices=["long_only", "long_short"])
    b.add_argument("--fee-bps", type=float)
    b.add_argument("--selection", help="count, fraction or 'all'")

    v = sub.add_parser("validate", parents=[common], help="Pearson validation against a reference")
    v.add_argument("--reference", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--assets", type=int, default=100)
    s.add_argument("--months", type=int, default=120)
    return parser


def _aux(items) -> dict[str, str]:
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--aux expects NAME=PATH, got {item!r}")
        out[name] = path
    return out


def _factor_list(text):
    if not text:
        return None
    return [f.strip() for f in text.split(",") if f.strip()]


def _param_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def _need(args, *names):
    for n in names:
        if not getattr(args, n):
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def cmd_compute(args) -> int:
    _need(args, "input", "schema")
    aux = _aux(args.aux)
    if "sp500" in aux:
        if "index" in aux:
            raise UsageError("give the index table once, as --aux index=PATH or --aux sp500=PATH")
        aux["index"] = aux.pop("sp500")
    unknown_aux = set(aux) - {"index"}
    if unknown_aux:
        raise UsageError(f"unknown auxiliary table(s) {sorted(unknown_aux)}; expected 'index'")
    params: dict[str, dict] = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        fname, dot, pname = key.partition(".")
        if not sep or not dot:
            raise UsageError(f"--param expects FACTOR.NAME=VALUE, got {item!r}")
        params.setdefault(fname, {})[pname] = _param_value(value)
    schema = ColumnSchema.load(args.schema)
    panel = ingest(args.input, schema)
    coefficients = args.config if args.config else "bundled"
    engine = MispricingFactors(panel, coefficients=coefficients, accounting_lag=args.accounting_lag)
    names = _factor_list(args.factors)
    if names is not None:
        for n in names:
            if n not in engine.registry:
                raise UsageError(f"unknown factor {n!r}; available: {', '.join(engine.registry.names())}")
    extras = {}
    if "index" in aux:
        extras["index"] = aux["index"]
    requested = names if names is not None else engine.registry.names()
    wants_index = [n for n in requested if "index" in engine.registry.lookup(n)[0].extras]
    if not wants_index:
        extras = {}
    frame, skipped = engine.compute_with_warnings(names, params=params or None, **extras)
    for rec in skipped:
        print(f"warning: skipped {rec.factor}: missing {', '.join(rec.missing)}", file=sys.stderr)
    computed = [n for n in requested if n in frame]
    text = FactorFile.from_frame(frame, computed).to_text()
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
        side = {"skipped": [r.to_dict() for r in skipped],
                "metadata": {k: engine.metadata[k] for k in sorted(engine.metadata)}}
        with open(args.output + ".warnings.json", "w") as fh:
            fh.write(_dump_json(side))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_strategy(path):
    if not path:
        return {}, {}
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw) if path.endswith(".json") else tomllib.loads(raw.decode("utf-8"))
    except ValueError as exc:
        raise ParseError(f"cannot parse strategy config {path}: {exc}") from None
    unknown = set(data) - {"strategy", "directions"}
    if unknown:
        raise ParameterError(f"unknown strategy config section(s) {sorted(unknown)}")
    return dict(data.get("strategy", {})), dict(data.get("directions", {}))


def _selection(text):
    if text is None:
        return None
    if text.lower() == "all":
        return "all"
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            raise UsageError(f"bad --selection {text!r}") from None


def _sharpe_key(item):
    s = item[1].report.sharpe
    return (s is None, -(s or 0.0), item[0])


def cmd_backtest(args) -> int:
    _need(args, "input", "output")
    aux = _aux(args.aux)
    returns_path = args.returns or aux.get("returns")
    if not returns_path:
        raise UsageError("--returns (or --aux returns=PATH) is required")
    factors = FactorFile.read(args.input)
    if args.schema:
        returns = ingest(returns_path, ColumnSchema.load(args.schema))
    else:
        from .panel import read_panel
        returns = read_panel(returns_path)
    base, directions = _load_strategy(args.config)
    for key, val in (("mode", args.mode), ("fee_bps", args.fee_bps),
                     ("selection", _selection(args.selection))):
        if val is not None:
            base[key] = val
    names = _factor_list(args.factors) or factors.names()
    for n in names:
        if n not in factors.factors:
            raise UsageError(f"factor {n!r} is not in {args.input}")
    os.makedirs(args.output, exist_ok=True)
    results: dict[str, BacktestResult] = {}
    for n in names:
        cfg = dict(base)
        cfg.setdefault("direction", directions.get(n, DIRECTIONS.get(n, "higher_is_better")))
        config = StrategyConfig.from_dict(n, cfg)
        res = run_backtest(factors.factors[n], returns, config)
        results[n] = res
        payload = {"factor": n, "config": _config_dict(config), "metrics": res.report.to_dict()}
        with open(os.path.join(args.output, f"{n}.json"), "w") as fh:
            fh.write(_dump_json(payload))
        with open(os.path.join(args.output, f"{n}_equity.csv"), "w", newline="") as fh:
            fh.write(res.curve.to_csv())
    board = sorted(results.items(), key=_sharpe_key)
    if args.top is not None:
        board = board[: args.top]
    rows = [{"factor": n, **{k: r.report.to_dict()[k] for k in ("sharpe", "total_return",
                                                                 "annualized_return", "volatility",
                                                                 "max_drawdown")}}
            for n, r in board]
    with open(os.path.join(args.output, "leaderboard.json"), "w") as fh:
        fh.write(_dump_json(rows))
    width = max([6] + [len(r["factor"]) for r in rows])
    print(f"{'Factor':<{width}}  {'Sharpe':>8}  {'Ann.Ret':>8}  {'Vol':>8}  {'MaxDD':>8}")
    for r in rows:
        cells = [("n/a" if r[k] is None else f"{r[k]:.4f}")
                 for k in ("sharpe", "annualized_return", "volatility", "max_drawdown")]
        print(f"{r['factor']:<{width}}  " + "  ".join(f"{c:>8}" for c in cells))
    return EXIT_OK


def _config_dict(config: StrategyConfig) -> dict:
    return {"direction": config.direction.value, "mode": config.mode.value,
            "selection": config.selection, "fee_bps": config.fee_bps,
            "risk_free_rate": config.risk_free_rate, "initial_capital": config.initial_capital,
            "rebalance": config.rebalance.value}


def cmd_validate(args) -> int:
    _need(args, "input")
    report = validate(FactorFile.read(args.input), FactorFile.read(args.reference))
    sys.stdout.write(report.to_table())
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(_dump_json(report.to_dict()))
    return EXIT_OK


def cmd_synth(args) -> int:
    _need(args, "output")
    data = synth.generate(args.assets, args.months, args.seed)
    paths = synth.write_dataset(data, args.output)
    for k in sorted(paths):
        print(f"{k}: {paths[k]}")
    return EXIT_OK


COMMANDS = {"compute": cmd_compute, "backtest": cmd_backtest,
            "validate": cmd_validate, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FactorLookupError) as exc:
        print(f"factorengine: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, SchemaError, IntegrityError) as exc:
        print(f"factorengine: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContractViolation, DefinitionError, ParameterError) as exc:
        print(f"factorengine: error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())

"""Factor registration and the compute orchestrator.

Factors are methods on a :class:`FactorEngine` subclass, decorated with
:func:`simple_factor` (body returns an :class:`~factorengine.expr.Expr`) or
:func:`advanced_factor` (body receives the whole panel and returns an
``(id, date, value)`` table). Decorating registers the factor on the class;
``engine.compute(...)`` runs any subset of them and joins the results back
onto the panel.
"""

from __future__ import annotations

import inspect
import logging
import os
import threading
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Iterable, Mapping

import numpy as np

from . import expr as E
from .errors import (ContractViolation, DefinitionError, FactorLookupError, ParameterError,
                     RegistrationError, SchemaError)
from .lags import OffsetColumnManager, lagged_name
from .panel import (CANONICAL_COLUMNS, ColumnSchema, FillStrategy, Frequency, PanelFrame,
                    complete_grid, fill_missing, ingest, left_join, resample, winsorize, zscore)

logger = logging.getLogger(__name__)

ALL = None


@dataclass(frozen=True)
class FactorDef:
    name: str
    kind: str
    requires: tuple[str, ...] = ()
    params: Mapping[str, Any] = field(default_factory=dict)
    extras: tuple[str, ...] = ()
    winsorize: tuple[float, float] | None = None
    zscore: bool = False
    offsets: Callable | Iterable | None = None
    doc: str = ""

    def __post_init__(self):
        if self.kind not in ("simple", "advanced"):
            raise RegistrationError(f"factor kind must be simple or advanced, got {self.kind!r}")
        if self.winsorize is not None:
            lo, hi = self.winsorize
            if not 0.0 <= lo < hi <= 1.0:
                raise RegistrationError(f"{self.name}: bad winsorize quantiles {self.winsorize}")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))


@dataclass(frozen=True)
class SkipRecord:
    """A factor that was not computed and the inputs it was missing."""

    factor: str
    missing: tuple[str, ...]

    def to_dict(self):
        return {"factor": self.factor, "missing": list(self.missing)}


class FactorRegistry:
    """Insertion-ordered name -> (definition, body) map."""

    def __init__(self, vocabulary: Iterable[str] | None = None):
        self.vocabulary = set(CANONICAL_COLUMNS if vocabulary is None else vocabulary)
        self._entries: dict[str, tuple[FactorDef, Callable]] = {}
        self._lock = threading.Lock()

    def register(self, fdef: FactorDef, body: Callable) -> None:
        unknown = [c for c in fdef.requires if c not in self.vocabulary]
        if unknown:
            raise RegistrationError(f"{fdef.name}: requires unknown column(s) {unknown}")
        with self._lock:
            if fdef.name in self._entries:
                raise RegistrationError(f"factor {fdef.name!r} is already registered")
            self._entries[fdef.name] = (fdef, body)

    def lookup(self, name: str) -> tuple[FactorDef, Callable]:
        try:
            return self._entries[name]
        except KeyError:
            raise FactorLookupError(f"unknown factor {name!r}") from None

    def names(self) -> list[str]:
        return list(self._entries)

    def copy(self) -> "FactorRegistry":
        new = FactorRegistry(self.vocabulary)
        new._entries = dict(self._entries)
        return new

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)


def check_requirements(fdef: FactorDef, frame: PanelFrame) -> tuple[bool, list[str]]:
    missing = [c for c in fdef.requires if c not in frame]
    return not missing, missing


class FactorResult(PanelFrame):
    """A three-column (id, date, value) table; ``name`` is the value column."""

    __slots__ = ("meta",)

    def __init__(self, ids, dates, name, values, meta=None, *, _trusted=False):
        super().__init__(ids, dates, {name: values}, _trusted=_trusted)
        self.meta = dict(meta or {})

    @property
    def name(self) -> str:
        return self.columns[0]

    @property
    def values(self) -> np.ndarray:
        return self[self.name]


# decorators

class _FactorMethod:
    """Descriptor left on the class by the decorators."""

    def __init__(self, kind, func, name, requires, extras, winsorize, zscore, offsets):
        self.kind = kind
        self.func = func
        self.name = name or func.__name__
        self.requires = tuple(requires)
        self.extras = tuple(extras)
        self.winsorize = tuple(winsorize) if winsorize is not None else None
        self.zscore = bool(zscore)
        self.offsets = offsets
        self.__doc__ = func.__doc__
        self.__wrapped__ = func

    def definition(self) -> FactorDef:
        sig = inspect.signature(self.func)
        plist = list(sig.parameters.values())[1:]  # drop self
        if self.kind == "advanced":
            if not plist:
                raise RegistrationError(f"{self.name}: advanced body must accept the panel")
            plist = plist[1:]
        params = {}
        for p in plist:
            if p.kind in (p.VAR_KEYWORD, p.VAR_POSITIONAL):
                continue
            if p.name in self.extras:
                continue
            if p.default is p.empty:
                raise RegistrationError(f"{self.name}: parameter {p.name!r} needs a default")
            params[p.name] = p.default
        missing_extras = [x for x in self.extras if x not in sig.parameters]
        if missing_extras:
            raise RegistrationError(f"{self.name}: body does not accept extra(s) {missing_extras}")
        return FactorDef(self.name, self.kind, self.requires, params, self.extras,
                         self.winsorize, self.zscore, self.offsets,
                         inspect.getdoc(self.func) or "")

    def __set_name__(self, owner, attr):
        self.attr = attr

    def __get__(self, obj, objtype=None):
        if obj is None:
            return self
        name = self.name

        def run(**kwargs):
            return obj.run_factor(name, **kwargs)

        run.__name__ = self.attr
        run.__doc__ = self.__doc__
        return run


def simple_factor(name: str | None = None, requires: Iterable[str] = (), *,
                  winsorize: tuple[float, float] | None = None, zscore: bool = False):
    """Register a method whose body returns a row-wise :class:`~factorengine.expr.Expr`.

    The engine requests any lagged columns the body asks for via ``self.col``,
    materialises them, evaluates the expression, then optionally winsorizes and
    z-scores the output per date (in that order).
    """
    def wrap(func):
        return _FactorMethod("simple", func, name, requires, (), winsorize, zscore, None)
    return wrap


def advanced_factor(name: str | None = None, requires: Iterable[str] = (), *,
                    extras: Iterable[str] = (), offsets=None,
                    winsorize: tuple[float, float] | None = None, zscore: bool = False):
    """Register a method that receives the full panel and returns (id, date, value).

    ``extras`` names auxiliary keyword inputs (e.g. an index series) supplied at
    compute time. ``offsets`` lists ``(column, lag)`` pairs, or is a callable
    ``(engine, **params) -> pairs``, that must be materialised on the panel
    before the body runs.
    """
    def wrap(func):
        return _FactorMethod("advanced", func, name, requires, extras, winsorize, zscore, offsets)
    return wrap


# engine

def _is_pandas(obj):
    return hasattr(obj, "columns") and hasattr(obj, "to_numpy") and not isinstance(obj, PanelFrame)


class FactorEngine:
    """Holds a canonical panel and computes registered factors over it.

    ``data`` may be a :class:`PanelFrame`, a path (CSV or ``.npz``), a mapping of
    column arrays, or a pandas DataFrame. Source columns are renamed to the
    canonical vocabulary through ``columns`` (``{canonical: source}``) or
    ``<canonical>_col="SOURCE"`` keywords; with no mapping, every non-key column
    keeps its name.
    """

    registry = FactorRegistry()
    vocabulary = frozenset(CANONICAL_COLUMNS)
    freq: Frequency | None = None

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        vocab = set(cls.vocabulary)
        reg = cls.registry.copy()
        reg.vocabulary = vocab
        for attr, val in vars(cls).items():
            if isinstance(val, _FactorMethod):
                reg.register(val.definition(), val.func)
        cls.registry = reg

    def __init__(self, data, id_col: str = "id", date_col: str = "date",
                 columns: Mapping[str, str] | None = None, *, freq=None, fill=None,
                 max_staleness=None, **column_kwargs):
        mapping = dict(columns or {})
        for k, v in column_kwargs.items():
            if not k.endswith("_col"):
                raise TypeError(f"unexpected keyword argument {k!r}")
            mapping[k[:-4]] = v
        frame = self._load(data, id_col, date_col, mapping)
        freq = freq if freq is not None else self.freq
        if freq is not None:
            freq = Frequency(freq)
            frame = complete_grid(resample(frame, freq, "last"), freq)
        if fill is not None:
            plan = fill if isinstance(fill, Mapping) else {c: fill for c in frame.columns}
            for col, strat in plan.items():
                frame = fill_missing(frame, [col], FillStrategy(strat))
        self.data = frame
        self._manager = OffsetColumnManager(frame.columns, max_staleness)
        self._work = frame
        self.skipped: list[SkipRecord] = []
        self.metadata: dict[str, dict] = {}

    @staticmethod
    def _load(data, id_col, date_col, mapping) -> PanelFrame:
        if isinstance(data, PanelFrame):
            if not mapping:
                return data
            data.require(mapping.values())
            renamed = {canon: data[src] for canon, src in mapping.items()}
            return PanelFrame._from_sorted(data.ids, data.dates, renamed)
        if _is_pandas(data):
            data = {c: data[c].to_numpy() for c in data.columns}
        if isinstance(data, (str, os.PathLike)):
            from .panel import read_table
            data = read_table(data)
        if not mapping:
            mapping = {c: c for c in data if c not in (id_col, date_col)}
        schema = ColumnSchema(id_col, date_col, tuple((src, canon) for canon, src in mapping.items()))
        return ingest(data, schema)

    # helpers for factor bodies

    def col(self, name: str, lag=0) -> E.Col:
        """Reference ``name`` lagged by ``lag`` (int months, ``"12mo"``, ``"1y"``, ``"30d"``)."""
        try:
            lagged = self._manager.request(name, lag)
        except SchemaError:
            raise DefinitionError(f"factor references unknown column {name!r}") from None
        return E.Col(name, lagged)

    @staticmethod
    def lag_name(column: str, lag) -> str:
        return lagged_name(column, lag)

    @property
    def join_passes(self) -> int:
        return self._manager.join_passes

    @property
    def offset_keys(self) -> frozenset:
        """Every (column, lag) pair materialised so far."""
        return frozenset(self._manager.materialized)

    def missing_inputs(self, fdef: FactorDef, extras: Mapping[str, Any]) -> list[str]:
        """Everything ``fdef`` needs that is absent; subclasses may add checks."""
        _, missing = check_requirements(fdef, self.data)
        missing += [x for x in fdef.extras if extras.get(x) is None]
        return missing

    # orchestration

    def _resolve(self, names) -> list[str]:
        if names is ALL or names == "all":
            return self.registry.names()
        if isinstance(names, str):
            names = [names]
        names = list(dict.fromkeys(names))
        for n in names:
            self.registry.lookup(n)
        return names

    def _route(self, names, params, kwargs):
        per = {n: {} for n in names}
        extras = {n: {} for n in names}
        for fname, p in (params or {}).items():
            if fname not in per:
                raise ParameterError(f"params given for factor {fname!r} which is not requested")
            fdef, _ = self.registry.lookup(fname)
            for k, v in p.items():
                if k in fdef.params:
                    per[fname][k] = v
                elif k in fdef.extras:
                    extras[fname][k] = v
                else:
                    raise ParameterError(f"{fname}: unknown parameter {k!r}")
        for k, v in kwargs.items():
            hit = False
            for n in names:
                fdef, _ = self.registry.lookup(n)
                if k in fdef.params:
                    per[n].setdefault(k, v)
                    hit = True
                elif k in fdef.extras:
                    extras[n].setdefault(k, v)
                    hit = True
            if not hit:
                raise ParameterError(f"parameter {k!r} is not accepted by any requested factor")
        return per, extras

    def _offsets(self, fdef, params):
        spec = fdef.offsets
        if spec is None:
            return []
        return list(spec(self, **params) if callable(spec) else spec)

    def _prepare(self, fdef, body, params):
        """Phase one: collect lag requests. Returns the simple-factor Expr, if any."""
        if fdef.kind == "simple":
            out = body(self, **params)
            if not isinstance(out, E.Expr):
                raise DefinitionError(f"{fdef.name}: simple factor body must return an Expr")
            stray = sorted({b for b, _ in out.columns()} - set(fdef.requires))
            if stray:
                raise DefinitionError(f"{fdef.name}: body uses undeclared column(s) {stray}")
            return out
        for column, lag in self._offsets(fdef, params):
            self.col(column, lag)
        return None

    def _evaluate(self, fdef, body, prepared, params, extras) -> FactorResult:
        work = self._work
        if fdef.kind == "simple":
            def env(name):
                try:
                    return work[name]
                except SchemaError:
                    raise DefinitionError(f"{fdef.name}: column {name!r} was not materialised") from None
            vals = np.broadcast_to(prepared.evaluate(env), (len(work),)).astype(np.float64)
            res = FactorResult(work.ids, work.dates, fdef.name, vals, _trusted=True)
        else:
            out = body(self, work, **extras, **params)
            res = self._validate_output(fdef.name, out)
        vals = np.where(np.isfinite(res.values), res.values, np.nan)
        if fdef.winsorize is not None:
            vals = winsorize(vals, res.dates, *fdef.winsorize)
        if fdef.zscore:
            vals = zscore(vals, res.dates)
        return FactorResult(res.ids, res.dates, fdef.name, vals,
                            meta=getattr(res, "meta", None), _trusted=True)

    @staticmethod
    def _validate_output(name, out) -> FactorResult:
        if isinstance(out, PanelFrame):
            if len(out.columns) != 1:
                raise ContractViolation(
                    f"{name}: expected exactly 3 columns (id, date, value), got {2 + len(out.columns)}")
            meta = getattr(out, "meta", None)
            return FactorResult(out.ids, out.dates, name, out[out.columns[0]], meta=meta, _trusted=True)
        if _is_pandas(out):
            out = {c: out[c].to_numpy() for c in out.columns}
        if not isinstance(out, Mapping):
            raise ContractViolation(f"{name}: body returned {type(out).__name__}, not a table")
        keys = list(out)
        if len(keys) != 3 or "id" not in out or "date" not in out:
            raise ContractViolation(f"{name}: expected exactly 3 columns (id, date, value), got {keys}")
        vkey = next(k for k in keys if k not in ("id", "date"))
        ids = np.asarray(out["id"]).astype(str)
        try:
            dates = np.asarray(out["date"], dtype="datetime64[D]")
            vals = np.asarray(out[vkey], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"{name}: {exc}") from None
        if not (len(ids) == len(dates) == len(vals)):
            raise ContractViolation(f"{name}: columns have unequal lengths")
        if len(ids) > 1:
            nxt_id, prv_id = ids[1:], ids[:-1]
            ordered = (prv_id < nxt_id) | ((prv_id == nxt_id) & (dates[:-1] < dates[1:]))
            if not ordered.all():
                raise ContractViolation(f"{name}: keys are duplicated or not sorted by (id, date)")
        return FactorResult(ids, dates, name, vals, _trusted=True)

    def run_factor(self, name: str, **kwargs) -> FactorResult:
        """Compute one factor directly (as ``engine.<factor>(...)`` does).

        Unlike :meth:`compute`, unmet requirements raise instead of skipping.
        """
        fdef, body = self.registry.lookup(name)
        per, extras = self._route([name], None, kwargs)
        missing = self.missing_inputs(fdef, extras[name])
        missing_cols = [m for m in missing if m in fdef.requires]
        if missing_cols:
            raise SchemaError(f"{name}: missing required column(s) {missing_cols}")
        if missing:
            raise ParameterError(f"{name}: missing required input(s) {missing}")
        params = {**fdef.params, **per[name]}
        prepared = self._prepare(fdef, body, params)
        self._work = self._manager.compute_offset_data(self._work)
        res = self._evaluate(fdef, body, prepared, params, extras[name])
        if res.meta:
            self.metadata[name] = res.meta
        return res

    def compute(self, names=ALL, *, params: Mapping[str, Mapping] | None = None, **kwargs) -> PanelFrame:
        """Compute the requested factors (default: all) and join them onto the panel.

        Keyword arguments go to every requested factor that declares a parameter
        or extra of that name; ``params={"momentum": {"lag": 6}}`` targets one
        factor. Factors whose inputs are missing are skipped; see ``skipped``.
        """
        return self.compute_with_warnings(names, params=params, **kwargs)[0]

    def compute_with_warnings(self, names=ALL, *, params=None, **kwargs):
        names = self._resolve(names)
        per, extras = self._route(names, params, kwargs)
        self.skipped = []
        plan = []
        for n in names:
            fdef, body = self.registry.lookup(n)
            missing = self.missing_inputs(fdef, extras[n])
            if missing:
                rec = SkipRecord(n, tuple(missing))
                self.skipped.append(rec)
                logger.warning("skipping factor %s: missing %s", n, ", ".join(missing))
                continue
            plan.append((fdef, body, {**fdef.params, **per[n]}))
        prepared = [self._prepare(fdef, body, p) for fdef, body, p in plan]
        self._work = self._manager.compute_offset_data(self._work)
        out = self.data
        for (fdef, body, p), prep in zip(plan, prepared):
            res = self._evaluate(fdef, body, prep, p, extras[fdef.name])
            if res.meta:
                self.metadata[fdef.name] = res.meta
            if len(res) == len(out) and np.array_equal(res.ids, out.ids) and np.array_equal(res.dates, out.dates):
                out = out.with_columns({fdef.name: res.values})
            else:
                out = left_join(out, res)
        return out, list(self.skipped)


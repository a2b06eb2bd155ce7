"""Panel data model: ingestion, canonical columns, fills, resampling and
cross-sectional preprocessing.

Nulls are stored as NaN in float64 columns. Any arithmetic involving a null
yields a null, which is exactly what IEEE NaN propagation gives us.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import _core
from .errors import IntegrityError, ParameterError, ParseError, SchemaError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CANONICAL_COLUMNS = {
    "mv": "market value of equity",
    "ret": "periodic total return (fraction)",
    "price": "share price",
    "shares": "split-adjusted shares outstanding",
    "ta": "total assets",
    "ibq": "quarterly income before extraordinary items",
    "gp": "gross profit",
    "cash": "cash and short-term investments",
    "ca": "current assets",
    "cl": "current liabilities",
    "std": "debt in current liabilities",
    "ltd": "long-term debt",
    "txp": "taxes payable",
    "dp": "depreciation and amortization",
    "ppegt": "gross property, plant and equipment",
    "invt": "inventory",
    "ni": "net income",
    "tl": "total liabilities",
    "ceq": "common equity",
    "ffo": "funds from operations",
}

KEY_COLUMNS = ("id", "date")


class FillStrategy(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    NONE = "none"


class Frequency(str, enum.Enum):
    DAILY = "daily"
    MONTHLY = "monthly"
    QUARTERLY = "quarterly"
    ANNUAL = "annual"


def _as_dates(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind == "M":
        return arr.astype("datetime64[D]")
    return np.array(arr, dtype="datetime64[D]")


class PanelFrame:
    """Immutable (id, date, columns...) table kept sorted by (id, date).

    Construction sorts the rows and rejects duplicate keys. Column arrays are
    marked read-only; every operation returns a new frame.
    """

    __slots__ = ("_ids", "_dates", "_columns", "_starts")

    def __init__(self, ids, dates, columns: Mapping[str, Iterable] | None = None, *, _trusted=False):
        ids = np.asarray(ids).astype(str)
        dates = _as_dates(dates)
        if ids.ndim != 1 or dates.shape != ids.shape:
            raise SchemaError("ids and dates must be 1-d arrays of equal length")
        cols = {}
        for name, values in (columns or {}).items():
            if name in KEY_COLUMNS:
                raise SchemaError(f"column name {name!r} is reserved")
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != ids.shape:
                raise SchemaError(f"column {name!r} has {arr.size} entries, expected {ids.size}")
            cols[name] = arr
        if np.isnat(dates).any():
            raise ParseError("null date in panel", row=int(np.flatnonzero(np.isnat(dates))[0]))
        if not _trusted:
            order = np.lexsort((dates, ids))
            if not np.array_equal(order, np.arange(ids.size)):
                ids, dates = ids[order], dates[order]
                cols = {k: v[order] for k, v in cols.items()}
            if ids.size > 1:
                dup = (ids[1:] == ids[:-1]) & (dates[1:] == dates[:-1])
                if dup.any():
                    k = int(np.flatnonzero(dup)[0]) + 1
                    raise IntegrityError(f"duplicate key ({ids[k]}, {dates[k]})")
        for arr in (ids, dates, *cols.values()):
            arr.flags.writeable = False
        self._ids = ids
        self._dates = dates
        self._columns = cols
        if ids.size:
            brk = np.flatnonzero(ids[1:] != ids[:-1]) + 1
            starts = np.concatenate(([0], brk, [ids.size])).astype(np.int64)
        else:
            starts = np.zeros(1, dtype=np.int64)
        starts.flags.writeable = False
        self._starts = starts

    # construction helpers

    @classmethod
    def _from_sorted(cls, ids, dates, columns):
        return cls(ids, dates, columns, _trusted=True)

    @classmethod
    def from_pandas(cls, df, id_col="id", date_col="date") -> "PanelFrame":
        cols = {c: df[c].to_numpy(dtype=np.float64, na_value=np.nan)
                for c in df.columns if c not in (id_col, date_col)}
        return cls(df[id_col].to_numpy(), df[date_col].to_numpy(), cols)

    def to_pandas(self):
        import pandas as pd

        data = {"id": self._ids, "date": self._dates}
        data.update(self._columns)
        return pd.DataFrame(data)

    # accessors

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def dates(self) -> np.ndarray:
        return self._dates

    @property
    def columns(self) -> list[str]:
        return list(self._columns)

    @property
    def group_starts(self) -> np.ndarray:
        """Row offsets where each asset's history begins (plus the total length)."""
        return self._starts

    @property
    def assets(self) -> np.ndarray:
        return self._ids[self._starts[:-1]]

    def __len__(self):
        return self._ids.size

    def __contains__(self, name):
        return name in self._columns

    def __getitem__(self, name) -> np.ndarray:
        if name == "id":
            return self._ids
        if name == "date":
            return self._dates
        try:
            return self._columns[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def __repr__(self):
        return f"PanelFrame(rows={len(self)}, assets={len(self._starts) - 1}, columns={self.columns})"

    def require(self, names: Iterable[str]) -> None:
        missing = [n for n in names if n not in self._columns]
        if missing:
            raise SchemaError(f"unknown column(s): {', '.join(missing)}")

    # derivations (all return new frames)

    def with_columns(self, columns: Mapping[str, np.ndarray]) -> "PanelFrame":
        cols = dict(self._columns)
        for k, v in columns.items():
            cols[k] = v
        return PanelFrame._from_sorted(self._ids, self._dates, cols)

    def select(self, names: Iterable[str]) -> "PanelFrame":
        names = list(names)
        self.require(names)
        return PanelFrame._from_sorted(self._ids, self._dates, {n: self._columns[n] for n in names})

    def drop(self, names: Iterable[str]) -> "PanelFrame":
        names = set(names)
        return PanelFrame._from_sorted(
            self._ids, self._dates, {k: v for k, v in self._columns.items() if k not in names})

    def filter(self, mask) -> "PanelFrame":
        mask = np.asarray(mask, dtype=bool)
        return PanelFrame._from_sorted(
            self._ids[mask], self._dates[mask], {k: v[mask] for k, v in self._columns.items()})

    def equals(self, other: "PanelFrame") -> bool:
        """Bitwise equality including null positions and column order."""
        if not isinstance(other, PanelFrame) or self.columns != other.columns:
            return False
        if not (np.array_equal(self._ids, other._ids) and np.array_equal(self._dates, other._dates)):
            return False
        return all(_same_bits(self._columns[c], other._columns[c]) for c in self._columns)

    def row_groups(self) -> np.ndarray:
        """Asset ordinal for each row."""
        return np.repeat(np.arange(len(self._starts) - 1, dtype=np.int64), np.diff(self._starts))

    def to_npz(self, path) -> None:
        np.savez(path, id=self._ids, date=self._dates.astype(str), **self._columns)


def asof_positions(source: PanelFrame, ids, targets, lower_bounds=None) -> np.ndarray:
    """Row index in ``source`` of the latest row of the same id dated at or
    before each target (and not before ``lower_bounds``); -1 where none."""
    ids = np.asarray(ids).astype(str)
    targets = _as_dates(targets).astype(np.int64)
    assets = source.assets
    if len(assets) == 0:
        return np.full(len(ids), -1, dtype=np.int64)
    g = np.searchsorted(assets, ids)
    gc = np.minimum(g, len(assets) - 1)
    groups = np.where(assets[gc] == ids, gc, -1).astype(np.int64)
    if lower_bounds is None:
        lower = np.full(len(ids), np.iinfo(np.int64).min, dtype=np.int64)
    else:
        lower = _as_dates(lower_bounds).astype(np.int64)
    return _core.asof_index(
        np.ascontiguousarray(source.group_starts),
        np.ascontiguousarray(source.dates.astype(np.int64)),
        np.ascontiguousarray(groups),
        np.ascontiguousarray(targets),
        np.ascontiguousarray(lower),
    )


def take(values: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Gather ``values[pos]`` with null where ``pos`` is -1."""
    out = np.full(len(pos), np.nan)
    ok = pos >= 0
    out[ok] = values[pos[ok]]
    return out


def _same_bits(a: np.ndarray, b: np.ndarray) -> bool:
    na, nb = np.isnan(a), np.isnan(b)
    if not np.array_equal(na, nb):
        return False
    return np.array_equal(a[~na].view(np.int64), b[~nb].view(np.int64))


def left_join(frame: PanelFrame, other: PanelFrame, names: Iterable[str] | None = None) -> PanelFrame:
    """Attach ``other``'s columns to ``frame`` by exact (id, date) match.

    Row count and keys of ``frame`` never change; unmatched rows get nulls.
    """
    names = list(other.columns if names is None else names)
    pos = asof_positions(other, frame.ids, frame.dates, frame.dates)
    return frame.with_columns({n: take(other[n], pos) for n in names})


# schema & ingestion

@dataclass(frozen=True)
class ColumnSchema:
    """Maps source column names onto the canonical vocabulary."""

    id_col: str
    date_col: str
    mappings: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.id_col or not self.date_col:
            raise SchemaError("id_col and date_col are mandatory")
        canon = [c for _, c in self.mappings]
        if len(set(canon)) != len(canon):
            raise SchemaError("canonical column names must be unique")
        clash = set(canon) & set(KEY_COLUMNS)
        if clash:
            raise SchemaError(f"canonical name(s) {sorted(clash)} collide with key columns")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ColumnSchema":
        try:
            id_col, date_col = data["id_col"], data["date_col"]
        except KeyError as exc:
            raise SchemaError(f"schema is missing {exc.args[0]!r}") from None
        cols = data.get("columns", {})
        return cls(id_col, date_col, tuple((src, canon) for canon, src in cols.items()))

    @classmethod
    def load(cls, path) -> "ColumnSchema":
        path = os.fspath(path)
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            if path.endswith(".json"):
                data = json.loads(raw)
            else:
                data = tomllib.loads(raw.decode("utf-8"))
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ParseError(f"cannot parse schema {path}: {exc}") from None
        return cls.from_dict(data)

    def to_toml(self) -> str:
        lines = [f'id_col = "{self.id_col}"', f'date_col = "{self.date_col}"', "", "[columns]"]
        lines += [f'{canon} = "{src}"' for src, canon in self.mappings]
        return "\n".join(lines) + "\n"


def read_table(source) -> dict[str, np.ndarray]:
    """Read a raw table from a CSV path, CSV text stream, or ``.npz`` archive.

    CSV cells stay strings; ``.npz`` arrays keep their stored dtype.
    """
    if isinstance(source, Mapping):
        return {k: np.asarray(v) for k, v in source.items()}
    if isinstance(source, (str, os.PathLike)) and os.fspath(source).endswith(".npz"):
        with np.load(os.fspath(source), allow_pickle=False) as z:
            return {k: z[k] for k in z.files}
    if isinstance(source, (str, os.PathLike)):
        with open(os.fspath(source), newline="", encoding="utf-8") as fh:
            return _read_csv(fh)
    return _read_csv(source)


def _read_csv(fh) -> dict[str, np.ndarray]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file: header row required") from None
    rows = list(reader)
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ParseError(f"row {i} (line {i + 2}) has {len(r)} fields, expected {len(header)}", row=i)
    if not rows:
        return {h: np.array([], dtype=str) for h in header}
    cols = list(zip(*rows))
    return {h: np.array(c, dtype=str) for h, c in zip(header, cols)}


def _parse_floats(name, raw) -> np.ndarray:
    if raw.dtype.kind in "fiub":
        return raw.astype(np.float64)
    out = np.empty(raw.size)
    for i, s in enumerate(raw):
        s = s.strip()
        if s == "":
            out[i] = np.nan
            continue
        try:
            out[i] = float(s)
        except ValueError:
            raise ParseError(f"column {name!r}: cannot parse {s!r} as a number at row {i}", row=i) from None
    return out


def _parse_dates(raw) -> np.ndarray:
    if raw.dtype.kind == "M":
        return raw.astype("datetime64[D]")
    try:
        out = np.array(raw, dtype="datetime64[s]").astype("datetime64[D]")
    except ValueError:
        out = None
    if out is not None and not np.isnat(out).any():
        return out
    for i, s in enumerate(raw):
        try:
            v = np.datetime64(str(s).strip(), "s")
        except ValueError:
            v = np.datetime64("NaT")
        if np.isnat(v):
            raise ParseError(f"cannot parse date {str(s)!r} at row {i}", row=i)
    raise ParseError("unparseable date")  # unreachable in practice


def ingest(source, schema: ColumnSchema) -> PanelFrame:
    """Build a canonical :class:`PanelFrame` from a raw table and a schema."""
    table = read_table(source)
    needed = [schema.id_col, schema.date_col] + [src for src, _ in schema.mappings]
    for name in needed:
        if name not in table:
            raise SchemaError(f"input is missing column {name!r}")
    ids = np.asarray(table[schema.id_col]).astype(str)
    dates = _parse_dates(np.asarray(table[schema.date_col]))
    cols = {canon: _parse_floats(src, np.asarray(table[src])) for src, canon in schema.mappings}
    return PanelFrame(ids, dates, cols)


def write_csv(frame: PanelFrame, fh) -> None:
    """Write a frame as CSV with 17-significant-digit floats and empty nulls."""
    fh.write(",".join(["id", "date", *frame.columns]) + "\n")
    dates = frame.dates.astype(str)
    cols = [frame[c] for c in frame.columns]
    for i in range(len(frame)):
        cells = [frame.ids[i], dates[i]]
        cells += ["" if math.isnan(c[i]) else format(c[i], ".17g") for c in cols]
        fh.write(",".join(cells) + "\n")


# fill / resample

def fill_missing(frame: PanelFrame, columns: Iterable[str], strategy: FillStrategy | str) -> PanelFrame:
    """Fill nulls from the same asset's own history; never crosses assets."""
    columns = list(columns)
    frame.require(columns)
    strategy = FillStrategy(strategy)
    if strategy is FillStrategy.NONE:
        return frame
    backward = strategy is FillStrategy.BACKWARD
    out = {}
    for c in columns:
        vals = frame[c]
        src = _core.fill_index(frame.group_starts, (~np.isnan(vals)).astype(np.uint8), backward)
        filled = np.full(len(frame), np.nan)
        ok = src >= 0
        filled[ok] = vals[src[ok]]
        out[c] = filled
    return frame.with_columns(out)


def period_end(dates, freq: Frequency | str) -> np.ndarray:
    """Last calendar day of the period containing each date."""
    freq = Frequency(freq)
    d = _as_dates(dates)
    if freq is Frequency.DAILY:
        return d
    if freq is Frequency.MONTHLY:
        m = d.astype("datetime64[M]")
    elif freq is Frequency.QUARTERLY:
        mi = d.astype("datetime64[M]").astype(np.int64)
        m = (mi - mi % 3 + 2).astype("datetime64[M]")
    else:
        m = (d.astype("datetime64[Y]") + 1).astype("datetime64[M]") - 1
    return (m + 1).astype("datetime64[D]") - 1


def resample(frame: PanelFrame, freq: Frequency | str, aggregation: str = "last") -> PanelFrame:
    """Aggregate to one row per (asset, period), labelled by the period's last day.

    ``last`` keeps the final observation in the period (nulls included);
    ``sum`` and ``mean`` skip nulls and give null for an all-null period.
    """
    if aggregation not in ("last", "sum", "mean"):
        raise ParameterError(f"unknown aggregation {aggregation!r}")
    if len(frame) == 0:
        raise ParameterError("cannot resample an empty frame")
    label = period_end(frame.dates, freq)
    # rows are sorted by (id, date) so (id, label) runs are contiguous
    brk = np.flatnonzero((frame.ids[1:] != frame.ids[:-1]) | (label[1:] != label[:-1])) + 1
    starts = np.concatenate(([0], brk))
    ends = np.concatenate((brk, [len(frame)])) - 1
    cols = {}
    for c in frame.columns:
        v = frame[c]
        if aggregation == "last":
            cols[c] = v[ends]
        else:
            present = ~np.isnan(v)
            s = np.add.reduceat(np.where(present, v, 0.0), starts)
            n = np.add.reduceat(present.astype(np.int64), starts)
            with np.errstate(invalid="ignore", divide="ignore"):
                cols[c] = np.where(n > 0, s if aggregation == "sum" else s / n, np.nan)
    return PanelFrame._from_sorted(frame.ids[starts], label[starts], cols)


def complete_grid(frame: PanelFrame, freq: Frequency | str = Frequency.MONTHLY) -> PanelFrame:
    """Insert all-null rows so each asset has every period between its first
    and last observation. Dates must already be period-end labels."""
    freq = Frequency(freq)
    if freq is Frequency.DAILY:
        return frame
    if len(frame) == 0:
        return frame
    step = {Frequency.MONTHLY: 1, Frequency.QUARTERLY: 3, Frequency.ANNUAL: 12}[freq]
    if not np.array_equal(period_end(frame.dates, freq), frame.dates):
        raise ParameterError("complete_grid expects period-end dates; resample first")
    months = frame.dates.astype("datetime64[M]").astype(np.int64)
    starts = frame.group_starts
    first, last = months[starts[:-1]], months[starts[1:] - 1]
    counts = (last - first) // step + 1
    if counts.sum() == len(frame):
        return frame
    gid = np.repeat(np.arange(len(counts)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    grid_m = first[gid] + offs * step
    grid_dates = (grid_m + 1).astype("datetime64[M]").astype("datetime64[D]") - 1
    grid = PanelFrame._from_sorted(frame.assets[gid], grid_dates, {})
    return left_join(grid, frame)


# cross-sectional preprocessing

def _date_groups(dates):
    dates = _as_dates(dates)
    order = np.argsort(dates, kind="stable")
    sd = dates[order]
    brk = np.flatnonzero(sd[1:] != sd[:-1]) + 1
    return order, np.split(order, brk) if len(order) else []


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*n)-th order statistic (1-based, min rank 1)."""
    n = len(sorted_values)
    # round away float noise such as 0.29 * 100 = 28.999999999999996
    k = math.ceil(round(q * n, 9))
    return float(sorted_values[min(max(k, 1), n) - 1])


def winsorize(values, dates, lower_q: float, upper_q: float) -> np.ndarray:
    """Clamp each date's cross-section to its [lower_q, upper_q] nearest-rank quantiles."""
    if not (0.0 <= lower_q < upper_q <= 1.0):
        raise ParameterError(f"need 0 <= lower_q < upper_q <= 1, got ({lower_q}, {upper_q})")
    values = np.asarray(values, dtype=np.float64)
    out = values.copy()
    _, groups = _date_groups(dates)
    for idx in groups:
        x = values[idx]
        ok = ~np.isnan(x)
        if not ok.any():
            continue
        s = np.sort(x[ok])
        lo, hi = nearest_rank(s, lower_q), nearest_rank(s, upper_q)
        out[idx[ok]] = np.clip(x[ok], lo, hi)
    return out


def zscore(values, dates) -> np.ndarray:
    """Per-date (x - mean) / population std; null when < 2 values or zero spread."""
    values = np.asarray(values, dtype=np.float64)
    out = np.full(values.shape, np.nan)
    _, groups = _date_groups(dates)
    for idx in groups:
        x = values[idx]
        ok = ~np.isnan(x)
        if ok.sum() < 2:
            continue
        v = x[ok]
        mu = v.mean()
        sd = np.sqrt(np.mean((v - mu) ** 2))
        if sd == 0.0 or not np.isfinite(sd):
            continue
        out[idx[ok]] = (v - mu) / sd
    return out


def read_panel(path, schema: ColumnSchema | None = None) -> PanelFrame:
    """Convenience wrapper: ingest with ``schema`` or identity-map every column."""
    if schema is None:
        table = read_table(path)
        schema = ColumnSchema("id", "date", tuple((c, c) for c in table if c not in KEY_COLUMNS))
        return ingest(table, schema)
    return ingest(path, schema)


__all__ = [
    "CANONICAL_COLUMNS", "ColumnSchema", "FillStrategy", "Frequency", "PanelFrame",
    "asof_positions", "complete_grid", "fill_missing", "ingest", "left_join", "nearest_rank", "period_end",
    "read_panel", "read_table", "resample", "take", "winsorize", "write_csv", "zscore",
]

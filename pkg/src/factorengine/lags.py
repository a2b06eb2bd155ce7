"""Deferred lagged-column management.

Factor definitions ask for lagged inputs (``mv`` twelve months ago, ...).
Nothing is computed at request time; :class:`OffsetColumnManager` records the
request and later materialises every pending lag in bulk, one as-of self-join
per distinct lag.

As-of semantics: the lagged value for row (asset, t) is the asset's own value
at the most recent date **at or before** ``t - lag``. An exact date match
counts. Future rows (anything after ``t - lag``) are never read.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ParameterError, SchemaError
from .panel import PanelFrame, asof_positions, take

_UNITS = {"d": "d", "day": "d", "days": "d",
          "mo": "mo", "month": "mo", "months": "mo",
          "y": "y", "year": "y", "years": "y"}
_LAG_RE = re.compile(r"^\s*(\d+)\s*([a-z]+)\s*$")


@dataclass(frozen=True, order=True)
class Lag:
    """A non-negative duration: ``count`` days, months or years."""

    count: int
    unit: str = "mo"

    def __post_init__(self):
        if self.unit not in ("d", "mo", "y"):
            raise ParameterError(f"unknown lag unit {self.unit!r}")
        if int(self.count) != self.count or self.count < 0:
            raise ParameterError(f"lag count must be a non-negative integer, got {self.count!r}")

    @classmethod
    def parse(cls, value) -> "Lag":
        """Accept a :class:`Lag`, an int (months) or text like ``"12mo"``, ``"1y"``, ``"30d"``."""
        if isinstance(value, Lag):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value), "mo")
        if isinstance(value, str):
            m = _LAG_RE.match(value.lower())
            if m and m.group(2) in _UNITS:
                return cls(int(m.group(1)), _UNITS[m.group(2)])
        raise ParameterError(f"cannot interpret {value!r} as a lag")

    @property
    def suffix(self) -> str:
        return f"{self.count}{self.unit}"

    @property
    def months(self) -> int:
        return self.count * 12 if self.unit == "y" else self.count

    def __add__(self, other):
        other = Lag.parse(other)
        if self.unit == "d" or other.unit == "d":
            if self.unit != other.unit:
                raise ParameterError("cannot add day lags to month/year lags")
            return Lag(self.count + other.count, "d")
        if self.unit == other.unit == "y":
            return Lag(self.count + other.count, "y")
        return Lag(self.months + other.months, "mo")

    def __str__(self):
        return self.suffix


def shift_back(dates, lag: Lag) -> np.ndarray:
    """Subtract ``lag`` from each date.

    Month arithmetic maps day d of month m to day min(d, last day of month
    m - k), except that a month-end date always maps to the target month's
    end (so Feb 29 minus one month is Jan 31, not Jan 29).
    """
    lag = Lag.parse(lag)
    dates = np.asarray(dates, dtype="datetime64[D]")
    if lag.count == 0:
        return dates
    if lag.unit == "d":
        return dates - np.timedelta64(lag.count, "D")
    month = dates.astype("datetime64[M]")
    day = (dates - month.astype("datetime64[D]")).astype(np.int64)
    own_end = (month + 1).astype("datetime64[D]") - 1
    tgt = month - lag.months
    tgt_start = tgt.astype("datetime64[D]")
    tgt_end = (tgt + 1).astype("datetime64[D]") - 1
    out = np.minimum(tgt_start + day, tgt_end)
    return np.where(dates == own_end, tgt_end, out)


@dataclass(frozen=True, order=True)
class OffsetKey:
    column: str
    lag: Lag

    @property
    def name(self) -> str:
        return lagged_name(self.column, self.lag)


def lagged_name(column: str, lag) -> str:
    """Public naming rule: ``<column>_lag_<count><unit>``; lag 0 is the bare column."""
    lag = Lag.parse(lag)
    return column if lag.count == 0 else f"{column}_lag_{lag.suffix}"


def join_with_offset(frame: PanelFrame, lag, columns: Iterable[str], max_staleness=None) -> PanelFrame:
    """Add ``<col>_lag_<lag>`` siblings for every column in one as-of self-join.

    ``max_staleness`` (a lag) optionally rejects matches dated more than that
    long before the target date; the default accepts any earlier row.
    """
    lag = Lag.parse(lag)
    columns = list(columns)
    frame.require(columns)
    if lag.count == 0:
        return frame
    targets = shift_back(frame.dates, lag)
    lower = None if max_staleness is None else shift_back(targets, Lag.parse(max_staleness))
    pos = asof_positions(frame, frame.ids, targets, lower)
    return frame.with_columns({lagged_name(c, lag): take(frame[c], pos) for c in columns})


class OffsetColumnManager:
    """Collects lag requests and materialises them in bulk.

    ``join_passes`` counts calls to :func:`join_with_offset` made by this
    manager; it equals the number of distinct lags materialised.
    """

    def __init__(self, known_columns: Iterable[str], max_staleness=None):
        self.known = set(known_columns)
        self.max_staleness = None if max_staleness is None else Lag.parse(max_staleness)
        self.pending: set[OffsetKey] = set()
        self.materialized: set[OffsetKey] = set()
        self.join_passes = 0

    def request(self, column: str, lag=0) -> str:
        lag = Lag.parse(lag)
        if column not in self.known:
            raise SchemaError(f"unknown column {column!r}")
        key = OffsetKey(column, lag)
        if lag.count and key not in self.materialized:
            self.pending.add(key)
        return key.name

    def compute_offset_data(self, frame: PanelFrame) -> PanelFrame:
        by_lag: dict[Lag, list[str]] = {}
        for key in sorted(self.pending):
            by_lag.setdefault(key.lag, []).append(key.column)
        for lag, cols in by_lag.items():
            frame = join_with_offset(frame, lag, cols, self.max_staleness)
            self.join_passes += 1
        self.materialized |= self.pending
        self.pending = set()
        return frame

    def lagged_columns(self) -> list[str]:
        return [k.name for k in sorted(self.materialized)]

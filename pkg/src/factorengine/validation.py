"""Factor files and correlation-based validation against a reference."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .panel import PanelFrame, left_join

HEADER = "id,date,factor,value"


@dataclass
class FactorFile:
    """Long-format factor values: one (id, date) -> value table per factor."""

    factors: dict[str, PanelFrame] = field(default_factory=dict)

    @classmethod
    def from_frame(cls, frame: PanelFrame, names) -> "FactorFile":
        return cls({n: frame.select([n]) for n in names if n in frame})

    def names(self) -> list[str]:
        return sorted(self.factors)

    def to_text(self) -> str:
        lines = [HEADER]
        for name in self.names():
            f = self.factors[name]
            vals = f[name]
            dates = f.dates.astype(str)
            for i in range(len(f)):
                v = vals[i]
                lines.append(f"{f.ids[i]},{dates[i]},{name},{'' if math.isnan(v) else format(v, '.17g')}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_text())

    @classmethod
    def parse(cls, text: str, source: str = "<text>") -> "FactorFile":
        lines = text.splitlines()
        if not lines or lines[0].strip() != HEADER:
            raise ParseError(f"{source}: line 1: expected header {HEADER!r}", row=1)
        cols: dict[str, tuple[list, list, list]] = {}
        seen = set()
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{source}: line {lineno}: expected 4 fields, got {len(parts)}", row=lineno)
            ident, date, name, value = parts
            try:
                d = np.datetime64(date, "D")
                v = float(value) if value != "" else math.nan
            except ValueError:
                raise ParseError(f"{source}: line {lineno}: bad date or value", row=lineno) from None
            if np.isnat(d) or not name:
                raise ParseError(f"{source}: line {lineno}: empty date or factor name", row=lineno)
            key = (ident, date, name)
            if key in seen:
                raise ParseError(f"{source}: line {lineno}: duplicate row for {key}", row=lineno)
            seen.add(key)
            bucket = cols.setdefault(name, ([], [], []))
            bucket[0].append(ident)
            bucket[1].append(d)
            bucket[2].append(v)
        return cls({n: PanelFrame(np.array(i, dtype=str), np.array(d, dtype="datetime64[D]"), {n: v})
                    for n, (i, d, v) in cols.items()})

    @classmethod
    def read(cls, path) -> "FactorFile":
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.parse(fh.read(), os.fspath(path))


def pearson(a, b) -> float | None:
    """Pearson r over pairs where both sides are non-null.

    None when fewer than two pairs survive or either side has zero variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ok = ~(np.isnan(a) | np.isnan(b))
    if ok.sum() < 2:
        return None
    x, y = a[ok], b[ok]
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(np.dot(dx, dx)), float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class ValidationReport:
    rows: list[tuple[str, float | None, int]]
    ours_only: list[str]
    reference_only: list[str]

    def to_dict(self) -> dict:
        return {
            "factors": [{"factor": f, "pearson": r, "n": n} for f, r, n in self.rows],
            "uncompared": {"ours_only": self.ours_only, "reference_only": self.reference_only},
            "min_pearson": min((r for _, r, _ in self.rows if r is not None), default=None),
        }

    def to_table(self) -> str:
        width = max([len("Factor")] + [len(f) for f, _, _ in self.rows])
        head = f"{'Factor':<{width}}  Pearson Correlation"
        lines = [head, "-" * len(head)]
        for f, r, _ in self.rows:
            cell = "n/a" if r is None else f"{r:.4f}"
            lines.append(f"{f:<{width}}  {cell:>19}")
        for f in self.ours_only:
            lines.append(f"{f:<{width}}  {'(not in reference)':>19}")
        for f in self.reference_only:
            lines.append(f"{f:<{width}}  {'(not in ours)':>19}")
        return "\n".join(lines) + "\n"


def validate(ours: FactorFile, reference: FactorFile) -> ValidationReport:
    """Correlate each factor present in both files over their common (id, date) keys."""
    both = sorted(set(ours.factors) & set(reference.factors))
    rows = []
    for name in both:
        mine = ours.factors[name]
        ref = reference.factors[name]
        joined = left_join(mine, PanelFrame._from_sorted(ref.ids, ref.dates, {"__ref": ref[name]}))
        a, b = joined[name], joined["__ref"]
        n = int((~(np.isnan(a) | np.isnan(b))).sum())
        rows.append((name, pearson(a, b), n))
    return ValidationReport(rows, sorted(set(ours.factors) - set(both)),
                            sorted(set(reference.factors) - set(both)))

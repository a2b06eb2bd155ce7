"""Lazy row-wise column expressions for simple factors.

A simple factor body returns an :class:`Expr`; the engine evaluates it once
all lagged columns it references have been materialised. Evaluation works on
float64 arrays where NaN is null, so nulls propagate through every operator.
Comparisons yield 1.0/0.0 (null if either side is null).
"""

from __future__ import annotations

import operator

import numpy as np


def _lift(value) -> "Expr":
    return value if isinstance(value, Expr) else Lit(value)


def _cmp(op):
    def apply(a, b):
        with np.errstate(invalid="ignore"):
            out = op(a, b).astype(np.float64)
        return np.where(np.isnan(a) | np.isnan(b), np.nan, out)
    return apply


def _positive(x):
    return np.where(x > 0, x, np.nan)


def _log(x):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log(_positive(x))


def _ratio(a, b):
    with np.errstate(invalid="ignore", divide="ignore"):
        return a / _positive(b)


_BINARY = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "/": operator.truediv, "**": operator.pow,
    "<": _cmp(operator.lt), "<=": _cmp(operator.le),
    ">": _cmp(operator.gt), ">=": _cmp(operator.ge),
    "==": _cmp(operator.eq),
    "ratio": _ratio,
    "min": np.fmin, "max": np.fmax,
}

_UNARY = {
    "neg": operator.neg,
    "abs": np.abs,
    "log": _log,
    "exp": np.exp,
    "sqrt": lambda x: np.sqrt(np.where(x >= 0, x, np.nan)),
    "positive": _positive,
}


class Expr:
    """Base node. Supports arithmetic, comparison and a few math methods."""

    def evaluate(self, env) -> np.ndarray:
        raise NotImplementedError

    def columns(self) -> set[tuple[str, str]]:
        """(base column, materialised name) pairs referenced by this expression."""
        return set()

    def __add__(self, o): return BinOp("+", self, _lift(o))
    def __radd__(self, o): return BinOp("+", _lift(o), self)
    def __sub__(self, o): return BinOp("-", self, _lift(o))
    def __rsub__(self, o): return BinOp("-", _lift(o), self)
    def __mul__(self, o): return BinOp("*", self, _lift(o))
    def __rmul__(self, o): return BinOp("*", _lift(o), self)
    def __truediv__(self, o): return BinOp("/", self, _lift(o))
    def __rtruediv__(self, o): return BinOp("/", _lift(o), self)
    def __pow__(self, o): return BinOp("**", self, _lift(o))
    def __lt__(self, o): return BinOp("<", self, _lift(o))
    def __le__(self, o): return BinOp("<=", self, _lift(o))
    def __gt__(self, o): return BinOp(">", self, _lift(o))
    def __ge__(self, o): return BinOp(">=", self, _lift(o))
    def __neg__(self): return UnOp("neg", self)
    def __abs__(self): return UnOp("abs", self)

    def eq(self, o) -> "Expr":
        return BinOp("==", self, _lift(o))

    def log(self) -> "Expr":
        """Natural log; null for non-positive input."""
        return UnOp("log", self)

    def exp(self) -> "Expr":
        return UnOp("exp", self)

    def sqrt(self) -> "Expr":
        return UnOp("sqrt", self)

    def abs(self) -> "Expr":
        return UnOp("abs", self)

    def positive(self) -> "Expr":
        """Null out non-positive values."""
        return UnOp("positive", self)

    __hash__ = object.__hash__


class Col(Expr):
    def __init__(self, base: str, name: str | None = None):
        self.base = base
        self.name = name or base

    def evaluate(self, env):
        return env(self.name)

    def columns(self):
        return {(self.base, self.name)}

    def __repr__(self):
        return f"col({self.name})"


class Lit(Expr):
    def __init__(self, value):
        self.value = float(value)

    def evaluate(self, env):
        return np.float64(self.value)

    def __repr__(self):
        return repr(self.value)


class BinOp(Expr):
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def evaluate(self, env):
        a, b = self.left.evaluate(env), self.right.evaluate(env)
        with np.errstate(all="ignore"):
            out = _BINARY[self.op](a, b)
        if self.op in ("min", "max"):
            # fmin/fmax skip NaN; restore null propagation
            out = np.where(np.isnan(a) | np.isnan(b), np.nan, out)
        return out

    def columns(self):
        return self.left.columns() | self.right.columns()

    def __repr__(self):
        return f"({self.left!r} {self.op} {self.right!r})"


class UnOp(Expr):
    def __init__(self, op, arg):
        self.op, self.arg = op, arg

    def evaluate(self, env):
        with np.errstate(all="ignore"):
            return _UNARY[self.op](self.arg.evaluate(env))

    def columns(self):
        return self.arg.columns()

    def __repr__(self):
        return f"{self.op}({self.arg!r})"


class Where(Expr):
    def __init__(self, cond, a, b):
        self.cond, self.a, self.b = cond, _lift(a), _lift(b)

    def evaluate(self, env):
        c = self.cond.evaluate(env)
        out = np.where(c > 0, self.a.evaluate(env), self.b.evaluate(env))
        return np.where(np.isnan(c), np.nan, out)

    def columns(self):
        return self.cond.columns() | self.a.columns() | self.b.columns()


def lit(value) -> Expr:
    return Lit(value)


def ratio(numerator, denominator) -> Expr:
    """Division that yields null when the denominator is zero or negative."""
    return BinOp("ratio", _lift(numerator), _lift(denominator))


def where(cond: Expr, a, b) -> Expr:
    return Where(cond, a, b)


def minimum(a, b) -> Expr:
    return BinOp("min", _lift(a), _lift(b))


def maximum(a, b) -> Expr:
    return BinOp("max", _lift(a), _lift(b))


def sum_exprs(terms) -> Expr:
    terms = list(terms)
    out = _lift(terms[0])
    for t in terms[1:]:
        out = out + t
    return out


def product(terms) -> Expr:
    terms = list(terms)
    out = _lift(terms[0])
    for t in terms[1:]:
        out = out * t
    return out

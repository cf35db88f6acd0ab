"""The fixed set of 16 feature transformation operations.

Every operation works on whole columns (1-D float arrays). Two evaluation
modes exist:

* ``strict`` computes the textbook function and lets ``nan``/``inf`` through.
* ``guarded`` replaces the partial functions with total surrogates so that
  finite input always gives finite output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import InputError

GUARD_EPS = 1e-10
_FMAX = np.finfo(np.float64).max

STRICT = "strict"
GUARDED = "guarded"
MODES = (STRICT, GUARDED)


@dataclass(frozen=True)
class Operation:
    name: str
    arity: int
    kind: str  # "elementwise" or "column"
    strict: Callable
    guarded: Callable


def _sanitize(x):
    # overflow escape hatch for guarded mode; untouched where already finite
    return np.nan_to_num(x, nan=0.0, posinf=_FMAX, neginf=-_FMAX)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _quantile(x):
    n = x.shape[0]
    if n < 2 or np.all(x == x[0]):
        return np.full(n, 0.5)
    return (rankdata(x, method="average") - 1.0) / (n - 1)


def _minmax(x):
    lo, hi = np.min(x), np.max(x)
    if not hi > lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def _minmax_guarded(x):
    out = _minmax(x)
    if np.isfinite(out).all():
        return out
    # span overflowed; halving first is exact and keeps it finite
    lo, hi = np.min(x), np.max(x)
    return (x / 2 - lo / 2) / (hi / 2 - lo / 2)


def _reciprocal_guarded(x):
    shift = np.where(x < 0, -GUARD_EPS, GUARD_EPS)
    return 1.0 / (x + shift)


def _divide_guarded(a, b):
    return a / np.where(b == 0, b + GUARD_EPS, b)


def _g(fn):
    return lambda *cols: _sanitize(fn(*cols))


OPERATIONS: tuple[Operation, ...] = (
    Operation("sqrt", 1, "elementwise", np.sqrt, _g(lambda x: np.sqrt(np.abs(x)))),
    Operation("square", 1, "elementwise", np.square, _g(np.square)),
    Operation("cos", 1, "elementwise", np.cos, _g(np.cos)),
    Operation("sin", 1, "elementwise", np.sin, _g(np.sin)),
    Operation("tan", 1, "elementwise", np.tan, _g(np.tan)),
    Operation("exp", 1, "elementwise", np.exp, _g(np.exp)),
    Operation("cube", 1, "elementwise", lambda x: x * x * x, _g(lambda x: x * x * x)),
    Operation("log", 1, "elementwise", np.log, _g(lambda x: np.log(np.abs(x) + GUARD_EPS))),
    Operation("reciprocal", 1, "elementwise", lambda x: 1.0 / x, _g(_reciprocal_guarded)),
    Operation("quantile", 1, "column", _quantile, _g(_quantile)),
    Operation("minmax", 1, "column", _minmax, _g(_minmax_guarded)),
    Operation("sigmoid", 1, "elementwise", _sigmoid, _g(_sigmoid)),
    Operation("plus", 2, "elementwise", np.add, _g(np.add)),
    Operation("subtract", 2, "elementwise", np.subtract, _g(np.subtract)),
    Operation("multiply", 2, "elementwise", np.multiply, _g(np.multiply)),
    Operation("divide", 2, "elementwise", np.divide, _g(_divide_guarded)),
)

OP_NAMES: tuple[str, ...] = tuple(op.name for op in OPERATIONS)
OP_INDEX: dict[str, int] = {name: i for i, name in enumerate(OP_NAMES)}
UNARY = tuple(op.name for op in OPERATIONS if op.arity == 1)
BINARY = tuple(op.name for op in OPERATIONS if op.arity == 2)


def get(name: str) -> Operation:
    try:
        return OPERATIONS[OP_INDEX[name]]
    except KeyError:
        raise InputError(f"unknown operation {name!r}") from None


def arity(name: str) -> int:
    return get(name).arity


def _check_mode(mode):
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")


def apply_unary(op: str, col, mode: str = GUARDED) -> np.ndarray:
    """Apply a unary operation to a column. Never raises on bad values."""
    _check_mode(mode)
    operation = get(op)
    if operation.arity != 1:
        raise InputError(f"{op} is binary")
    col = np.asarray(col, dtype=np.float64)
    if col.ndim != 1 or col.shape[0] == 0:
        raise InputError("expected a non-empty 1-D column")
    fn = operation.strict if mode == STRICT else operation.guarded
    with np.errstate(all="ignore"):
        return np.asarray(fn(col), dtype=np.float64)


def apply_binary(op: str, a, b, mode: str = GUARDED) -> np.ndarray:
    """Apply a binary operation elementwise to two equal-length columns."""
    _check_mode(mode)
    operation = get(op)
    if operation.arity != 2:
        raise InputError(f"{op} is unary")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"column shape mismatch: {a.shape} vs {b.shape}")
    fn = operation.strict if mode == STRICT else operation.guarded
    with np.errstate(all="ignore"):
        return np.asarray(fn(a, b), dtype=np.float64)

"""Side-effect-free expression language shared by actions, guards, and equations.

Values are plain Python scalars: ``float`` for real, ``int`` for int and
``bool`` for bool. Port fields and signal payload fields are addressed with
dotted names (``p.x``, ``msg.k``) and looked up in the environment under the
joined key ``"p.x"``. The name ``time`` always reads the simulation clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Union

from hrt.diagnostics import NO_SPAN, SourceSpan


class Kind(str, Enum):
    REAL = "real"
    INT = "int"
    BOOL = "bool"

    def __str__(self) -> str:
        return self.value


Value = Union[float, int, bool]

TIME = "time"
RESERVED = frozenset({"and", "or", "not", "true", "false", TIME})


class ExprError(Exception):
    def __init__(self, message: str, span: SourceSpan = NO_SPAN):
        super().__init__(message)
        self.message = message
        self.span = span


class UnboundSymbolError(ExprError):
    def __init__(self, name: str, span: SourceSpan = NO_SPAN):
        super().__init__(f"unbound symbol '{name}'", span)
        self.name = name


class ExprTypeError(ExprError):
    pass


class EvalError(ExprError):
    pass


# -- syntax -----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float | int
    kind: Kind
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Name:
    name: str
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class FieldRef:
    """``base.field``: a DPort field or a signal payload field (base ``msg``)."""

    base: str
    field: str
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    @property
    def key(self) -> str:
        return f"{self.base}.{self.field}"


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "not"
    operand: Expr
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple[Expr, ...]
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


Expr = Union[Num, BoolLit, Name, FieldRef, Unary, Binary, Call]

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("and", "or")

# name -> (min arity, max arity or None)
BUILTINS: dict[str, tuple[int, int | None]] = {
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
}


def walk(e: Expr):
    """Yield ``e`` and all sub-expressions, pre-order."""
    yield e
    if isinstance(e, Unary):
        yield from walk(e.operand)
    elif isinstance(e, Binary):
        yield from walk(e.left)
        yield from walk(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from walk(a)


def symbols(e: Expr) -> set[str]:
    """Environment keys read by ``e`` (``time`` excluded)."""
    out = set()
    for node in walk(e):
        if isinstance(node, Name) and node.name != TIME:
            out.add(node.name)
        elif isinstance(node, FieldRef):
            out.add(node.key)
    return out


def field_refs(e: Expr) -> list[FieldRef]:
    return [n for n in walk(e) if isinstance(n, FieldRef)]


# -- printing ---------------------------------------------------------------

_PREC = {"or": 1, "and": 2, "not": 3, **{op: 4 for op in CMP_OPS}, "+": 5, "-": 5, "*": 6, "/": 6}
_UNARY_MINUS = 7
_ATOM = 8


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return _PREC["not"] if e.op == "not" else _UNARY_MINUS
    return _ATOM


def format_number(value: float | int, kind: Kind) -> str:
    if kind is Kind.INT:
        return str(value)
    text = repr(float(value))
    if text in ("inf", "nan", "-inf"):
        raise ValueError(f"non-finite literal {text}")
    return text


def to_source(e: Expr) -> str:
    """Render ``e`` in concrete syntax that reparses to an equal expression."""

    def wrap(sub: Expr, min_prec: int) -> str:
        text = to_source(sub)
        return f"({text})" if _prec(sub) < min_prec else text

    if isinstance(e, Num):
        return format_number(e.value, e.kind)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.name
    if isinstance(e, FieldRef):
        return e.key
    if isinstance(e, Unary):
        if e.op == "not":
            return f"not {wrap(e.operand, _PREC['not'])}"
        # "- -x" would lex fine, but keep a space-free form unambiguous
        return f"-{wrap(e.operand, _UNARY_MINUS)}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        if e.op in CMP_OPS:
            return f"{wrap(e.left, p + 1)} {e.op} {wrap(e.right, p + 1)}"
        return f"{wrap(e.left, p)} {e.op} {wrap(e.right, p + 1)}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


# -- typing -----------------------------------------------------------------


def kind_of(v: Value) -> Kind:
    if isinstance(v, bool):
        return Kind.BOOL
    if isinstance(v, int):
        return Kind.INT
    if isinstance(v, float):
        return Kind.REAL
    raise ExprTypeError(f"not a scalar value: {v!r}")


def _numeric(k: Kind) -> bool:
    return k is not Kind.BOOL


def infer_kind(e: Expr, scope: Mapping[str, Kind]) -> Kind:
    """Static kind of ``e`` given the kinds of the names in scope.

    Raises UnboundSymbolError or ExprTypeError, both carrying the offending span.
    """
    if isinstance(e, Num):
        return e.kind
    if isinstance(e, BoolLit):
        return Kind.BOOL
    if isinstance(e, Name):
        if e.name == TIME:
            return Kind.REAL
        if e.name not in scope:
            raise UnboundSymbolError(e.name, e.span)
        return scope[e.name]
    if isinstance(e, FieldRef):
        if e.key not in scope:
            raise UnboundSymbolError(e.key, e.span)
        return scope[e.key]
    if isinstance(e, Unary):
        k = infer_kind(e.operand, scope)
        if e.op == "not":
            if k is not Kind.BOOL:
                raise ExprTypeError(f"'not' needs a bool operand, got {k}", e.span)
            return Kind.BOOL
        if not _numeric(k):
            raise ExprTypeError(f"unary '-' needs a numeric operand, got {k}", e.span)
        return k
    if isinstance(e, Binary):
        lk, rk = infer_kind(e.left, scope), infer_kind(e.right, scope)
        if e.op in LOGIC_OPS:
            if lk is not Kind.BOOL or rk is not Kind.BOOL:
                raise ExprTypeError(f"'{e.op}' needs bool operands, got {lk} and {rk}", e.span)
            return Kind.BOOL
        if e.op in ("==", "!="):
            if (lk is Kind.BOOL) != (rk is Kind.BOOL):
                raise ExprTypeError(f"cannot compare {lk} with {rk}", e.span)
            return Kind.BOOL
        if not (_numeric(lk) and _numeric(rk)):
            raise ExprTypeError(f"'{e.op}' needs numeric operands, got {lk} and {rk}", e.span)
        if e.op in CMP_OPS:
            return Kind.BOOL
        return Kind.INT if lk is Kind.INT and rk is Kind.INT else Kind.REAL
    if isinstance(e, Call):
        if e.func not in BUILTINS:
            raise UnboundSymbolError(e.func, e.span)
        lo, hi = BUILTINS[e.func]
        if len(e.args) < lo or (hi is not None and len(e.args) > hi):
            raise ExprTypeError(f"{e.func}() takes {lo} argument(s), got {len(e.args)}", e.span)
        kinds = [infer_kind(a, scope) for a in e.args]
        if not all(_numeric(k) for k in kinds):
            raise ExprTypeError(f"{e.func}() needs numeric arguments", e.span)
        if e.func in ("abs", "min", "max") and all(k is Kind.INT for k in kinds):
            return Kind.INT
        return Kind.REAL
    raise TypeError(f"not an expression: {e!r}")


def assignable(target: Kind, value: Kind) -> bool:
    return target is value or (target is Kind.REAL and value is Kind.INT)


def coerce(value: Value, kind: Kind) -> Value:
    """Convert ``value`` for storage in a slot of ``kind`` (int widens to real only)."""
    vk = kind_of(value)
    if vk is kind:
        return value
    if kind is Kind.REAL and vk is Kind.INT:
        return float(value)
    raise ExprTypeError(f"cannot store {vk} value in {kind} slot")


# -- evaluation -------------------------------------------------------------


def _real_div(a: float, b: float) -> float:
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def _int_div(a: int, b: int, span: SourceSpan) -> int:
    if b == 0:
        raise EvalError("integer division by zero", span)
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _sqrt(x: float) -> float:
    return math.sqrt(x) if x >= 0 or math.isnan(x) else math.nan


_FUNCS: dict[str, Callable] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "sqrt": _sqrt,
}


def _num(v: Value, op: str, span: SourceSpan) -> float | int:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ExprTypeError(f"'{op}' needs numeric operands, got {v!r}", span)
    return v


def _bool(v: Value, op: str, span: SourceSpan) -> bool:
    if not isinstance(v, bool):
        raise ExprTypeError(f"'{op}' needs bool operands, got {v!r}", span)
    return v


def evaluate(e: Expr, env: Mapping[str, Value], t: float = 0.0) -> Value:
    """Evaluate ``e`` with ``env`` bindings and ``time`` bound to ``t``."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, Name):
        if e.name == TIME:
            return t
        try:
            return env[e.name]
        except KeyError:
            raise UnboundSymbolError(e.name, e.span) from None
    if isinstance(e, FieldRef):
        try:
            return env[e.key]
        except KeyError:
            raise UnboundSymbolError(e.key, e.span) from None
    if isinstance(e, Unary):
        v = evaluate(e.operand, env, t)
        if e.op == "not":
            return not _bool(v, "not", e.span)
        return -_num(v, "-", e.span)
    if isinstance(e, Binary):
        op = e.op
        if op == "and":
            return _bool(evaluate(e.left, env, t), op, e.span) and _bool(evaluate(e.right, env, t), op, e.span)
        if op == "or":
            return _bool(evaluate(e.left, env, t), op, e.span) or _bool(evaluate(e.right, env, t), op, e.span)
        a, b = evaluate(e.left, env, t), evaluate(e.right, env, t)
        if op in ("==", "!="):
            if isinstance(a, bool) != isinstance(b, bool):
                raise ExprTypeError(f"cannot compare {a!r} with {b!r}", e.span)
            return (a == b) if op == "==" else (a != b)
        a, b = _num(a, op, e.span), _num(b, op, e.span)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if isinstance(a, int) and isinstance(b, int):
                return _int_div(a, b, e.span)
            return _real_div(float(a), float(b))
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        raise EvalError(f"unknown operator {op!r}", e.span)
    if isinstance(e, Call):
        args = [_num(evaluate(a, env, t), e.func, e.span) for a in e.args]
        if e.func == "abs":
            return abs(args[0])
        if e.func == "min":
            return _minmax(min, args)
        if e.func == "max":
            return _minmax(max, args)
        try:
            fn = _FUNCS[e.func]
        except KeyError:
            raise UnboundSymbolError(e.func, e.span) from None
        return fn(float(args[0]))
    raise TypeError(f"not an expression: {e!r}")


def _minmax(fn, args):
    if all(isinstance(a, int) for a in args):
        return fn(args)
    return float(fn(float(a) for a in args))

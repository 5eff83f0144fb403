"""Tree-walking interpreter for heuristic programs.

Values are 64-bit float scalars, 1-D vectors, or 2-D matrices (numpy arrays).
Binary operators are elementwise: scalar/scalar, vector/vector of equal length,
matrix/matrix of equal dims, or a scalar broadcast against either side. Any
other pairing is a ShapeError. Division by zero, log of a non-positive value,
sqrt of a negative, 0 raised to a negative power, and any operation producing a
NaN or infinity raise NumericError immediately, so non-finite values never
propagate.

Execution is deterministic and budgeted: every statement and expression node
evaluated counts as one step against ExecLimits.max_steps, and every loop-body
iteration counts against ExecLimits.max_loop_total.

Arrays have reference semantics inside a program (like numpy); the copy()
builtin takes an independent snapshot. Argument arrays are copied at call entry
so execute() never mutates caller data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DslTypeError,
    NumericError,
    ShapeError,
    SignatureError,
    StepBudgetExceeded,
)
from .nodes import NodeKind, SyntaxTree, if_branches

Value = float | np.ndarray

DEFAULT_MAX_STEPS = 2_000_000
DEFAULT_MAX_LOOP_TOTAL = 1_000_000

VALUE_SHAPES = ("scalar", "vector", "matrix")


@dataclass(frozen=True)
class ExecLimits:
    max_steps: int = DEFAULT_MAX_STEPS
    max_loop_total: int = DEFAULT_MAX_LOOP_TOTAL

    def __post_init__(self):
        if self.max_steps <= 0 or self.max_loop_total <= 0:
            raise ValueError("execution limits must be positive")


@dataclass(frozen=True)
class TaskSignature:
    function_name: str
    params: tuple[tuple[str, str], ...]  # (name, shape) with shape in VALUE_SHAPES
    result_shape: str

    def __post_init__(self):
        names = [name for name, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        for _, shape in self.params + (("", self.result_shape),):
            if shape not in VALUE_SHAPES:
                raise ValueError(f"unknown value shape {shape!r}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.params)


def shape_of(value) -> str:
    if isinstance(value, float):
        return "scalar"
    if isinstance(value, np.ndarray):
        return "vector" if value.ndim == 1 else "matrix"
    raise DslTypeError(f"not a DSL value: {type(value).__name__}")


def validate_signature(tree: SyntaxTree, sig: TaskSignature) -> None:
    """Check that a parsed program fits a task signature.

    Verifies the function name, the parameter count and names (in order), and
    that every control path through the body ends in a return statement.
    """
    if tree.kind is not NodeKind.PROGRAM:
        raise SignatureError("expected a Program root")
    params = [c.lexeme for c in tree.children if c.kind is NodeKind.PARAM]
    expected = sig.param_names
    if len(params) != len(expected):
        raise SignatureError(
            f"expected {len(expected)} parameters, found {len(params)}")
    for i, (got, want) in enumerate(zip(params, expected)):
        if got != want:
            raise SignatureError(f"parameter {i + 1} must be named {want!r}, found {got!r}")
    if tree.lexeme != sig.function_name:
        raise SignatureError(
            f"expected function named {sig.function_name!r}, found {tree.lexeme!r}")
    body = [c for c in tree.children if c.kind is not NodeKind.PARAM]
    if not _returns_always(body):
        raise SignatureError("not every control path ends in a return statement")


def _returns_always(stmts) -> bool:
    for stmt in stmts:
        if stmt.kind is NodeKind.RETURN:
            return True
        if stmt.kind is NodeKind.IF:
            _, then_stmts, else_stmts = if_branches(stmt)
            if else_stmts is not None and _returns_always(then_stmts) and _returns_always(else_stmts):
                return True
        # for-loops may run zero times and never guarantee a return
    return False


# --- evaluation ---------------------------------------------------------------

class _Return(Exception):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


@dataclass
class _Ctx:
    limits: ExecLimits
    steps: int = 0
    loop_iters: int = 0
    env: dict = field(default_factory=dict)

    def tick(self):
        self.steps += 1
        if self.steps > self.limits.max_steps:
            raise StepBudgetExceeded(
                f"exceeded {self.limits.max_steps} interpreter steps")

    def tick_loop(self):
        self.loop_iters += 1
        if self.loop_iters > self.limits.max_loop_total:
            raise StepBudgetExceeded(
                f"exceeded {self.limits.max_loop_total} total loop iterations")


def execute(tree: SyntaxTree, args: list, limits: ExecLimits | None = None):
    """Run a program on argument values; returns (result, steps_used).

    Callers are expected to have validated the signature; the arity is still
    re-checked here. Argument arrays are defensively copied.
    """
    if limits is None:
        limits = ExecLimits()
    if tree.kind is not NodeKind.PROGRAM:
        raise DslTypeError("execute expects a Program root")
    params = [c.lexeme for c in tree.children if c.kind is NodeKind.PARAM]
    body = [c for c in tree.children if c.kind is not NodeKind.PARAM]
    if len(args) != len(params):
        raise DslTypeError(f"expected {len(params)} arguments, got {len(args)}")

    ctx = _Ctx(limits)
    for name, raw in zip(params, args):
        ctx.env[name] = _adopt_argument(name, raw)

    with np.errstate(all="ignore"):  # non-finite results raise NumericError instead
        try:
            for stmt in body:
                _exec_stmt(stmt, ctx)
        except _Return as ret:
            return ret.value, ctx.steps
    raise DslTypeError("program finished without executing a return")


def _adopt_argument(name: str, raw):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        value = float(raw)
        if not math.isfinite(value):
            raise NumericError(f"argument {name!r} is not finite")
        return value
    if isinstance(raw, np.ndarray):
        if raw.ndim not in (1, 2):
            raise DslTypeError(f"argument {name!r} must be a scalar, vector, or matrix")
        arr = np.array(raw, dtype=np.float64, copy=True)
        if not np.isfinite(arr).all():
            raise NumericError(f"argument {name!r} contains non-finite entries")
        return arr
    raise DslTypeError(f"argument {name!r} has unsupported type {type(raw).__name__}")


def _exec_stmt(node: SyntaxTree, ctx: _Ctx) -> None:
    ctx.tick()
    kind = node.kind
    if kind is NodeKind.RETURN:
        raise _Return(_eval(node.children[0], ctx))
    if kind is NodeKind.LET:
        ctx.env[node.lexeme] = _eval(node.children[0], ctx)
        return
    if kind is NodeKind.ASSIGN:
        if node.lexeme not in ctx.env:
            raise DslTypeError(f"assignment to undefined variable {node.lexeme!r}")
        ctx.env[node.lexeme] = _eval(node.children[0], ctx)
        return
    if kind is NodeKind.INDEX_ASSIGN:
        _exec_index_assign(node, ctx)
        return
    if kind is NodeKind.FOR:
        lo = _as_index(_eval(node.children[0], ctx), "loop lower bound")
        hi = _as_index(_eval(node.children[1], ctx), "loop upper bound")
        body = node.children[2:]
        var = node.lexeme
        for k in range(lo, hi):
            ctx.tick_loop()
            ctx.env[var] = float(k)
            for stmt in body:
                _exec_stmt(stmt, ctx)
        return
    if kind is NodeKind.IF:
        cond_node, then_stmts, else_stmts = if_branches(node)
        cond = _eval(cond_node, ctx)
        if not isinstance(cond, float):
            raise DslTypeError("if condition must be a scalar")
        branch = then_stmts if cond != 0.0 else (else_stmts or [])
        for stmt in branch:
            _exec_stmt(stmt, ctx)
        return
    raise DslTypeError(f"not a statement: {kind.value}")


def _exec_index_assign(node: SyntaxTree, ctx: _Ctx) -> None:
    name = node.lexeme
    target = ctx.env.get(name)
    if target is None:
        raise DslTypeError(f"index assignment to undefined variable {name!r}")
    if not isinstance(target, np.ndarray):
        raise DslTypeError(f"cannot index-assign into scalar {name!r}")
    indices = [_as_index(_eval(c, ctx), "index") for c in node.children[:-1]]
    value = _eval(node.children[-1], ctx)
    if not isinstance(value, float):
        raise DslTypeError("indexed assignment requires a scalar value")
    if target.ndim != len(indices):
        raise DslTypeError(
            f"{shape_of(target)} {name!r} needs {target.ndim} indices, got {len(indices)}")
    for axis, idx in enumerate(indices):
        if idx < 0 or idx >= target.shape[axis]:
            raise ShapeError(f"index {idx} out of bounds for axis of size {target.shape[axis]}")
    target[tuple(indices)] = value


def _as_index(value, what: str) -> int:
    if not isinstance(value, float):
        raise DslTypeError(f"{what} must be a scalar")
    rounded = round(value)
    if abs(value - rounded) > 1e-9:
        raise DslTypeError(f"{what} must be an integer, got {value}")
    return int(rounded)


def _eval(node: SyntaxTree, ctx: _Ctx):
    ctx.tick()
    kind = node.kind
    if kind is NodeKind.IDENT:
        try:
            return ctx.env[node.lexeme]
        except KeyError:
            raise DslTypeError(f"undefined variable {node.lexeme!r}") from None
    if kind is NodeKind.NUM_LIT:
        return float(node.lexeme)
    if kind is NodeKind.BINARY:
        left = _eval(node.children[0], ctx)
        right = _eval(node.children[1], ctx)
        return _binary(node.lexeme, left, right)
    if kind is NodeKind.UNARY:
        operand = _eval(node.children[0], ctx)
        if node.lexeme == "-":
            return -operand if isinstance(operand, float) else np.negative(operand)
        # logical not: nonzero -> 0, zero -> 1
        if isinstance(operand, float):
            return 1.0 if operand == 0.0 else 0.0
        return (operand == 0.0).astype(np.float64)
    if kind is NodeKind.INDEX:
        return _eval_index(node, ctx)
    if kind is NodeKind.CALL:
        return _eval_call(node, ctx)
    raise DslTypeError(f"not an expression: {kind.value}")


def _eval_index(node: SyntaxTree, ctx: _Ctx):
    try:
        target = ctx.env[node.lexeme]
    except KeyError:
        raise DslTypeError(f"undefined variable {node.lexeme!r}") from None
    if not isinstance(target, np.ndarray):
        raise DslTypeError(f"cannot index scalar {node.lexeme!r}")
    indices = [_as_index(_eval(c, ctx), "index") for c in node.children]
    if target.ndim != len(indices):
        raise DslTypeError(
            f"{shape_of(target)} {node.lexeme!r} needs {target.ndim} indices, got {len(indices)}")
    for axis, idx in enumerate(indices):
        if idx < 0 or idx >= target.shape[axis]:
            raise ShapeError(f"index {idx} out of bounds for axis of size {target.shape[axis]}")
    return float(target[tuple(indices)])


# --- operators ------------------------------------------------------------------

_CMP = {
    "<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal,
    "==": np.equal, "!=": np.not_equal,
}


def _binary(op: str, a, b):
    a_is_f = isinstance(a, float)
    b_is_f = isinstance(b, float)
    if a_is_f and b_is_f:
        return _binary_scalar(op, a, b)
    if not a_is_f and not b_is_f and a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {shape_of(a)}{a.shape} vs {shape_of(b)}{b.shape}")
    if op == "+":
        result = a + b
    elif op == "-":
        result = a - b
    elif op == "*":
        result = a * b
    elif op == "/":
        if np.any(b == 0.0) if not b_is_f else b == 0.0:
            raise NumericError("division by zero")
        result = a / b
    elif op == "%":
        if np.any(b == 0.0) if not b_is_f else b == 0.0:
            raise NumericError("modulo by zero")
        result = np.mod(a, b)
    elif op == "^":
        return _pow(a, b)
    elif op in _CMP:
        return _CMP[op](a, b).astype(np.float64)
    elif op == "&&":
        return np.logical_and(np.asarray(a) != 0.0, np.asarray(b) != 0.0).astype(np.float64)
    elif op == "||":
        return np.logical_or(np.asarray(a) != 0.0, np.asarray(b) != 0.0).astype(np.float64)
    else:
        raise DslTypeError(f"unknown operator {op!r}")
    if not np.isfinite(result).all():
        raise NumericError(f"operator {op!r} produced a non-finite value")
    return result


def _binary_scalar(op: str, a: float, b: float):
    if op == "+":
        result = a + b
    elif op == "-":
        result = a - b
    elif op == "*":
        result = a * b
    elif op == "/":
        if b == 0.0:
            raise NumericError("division by zero")
        result = a / b
    elif op == "%":
        if b == 0.0:
            raise NumericError("modulo by zero")
        result = math.fmod(a, b)
        # match Python %: result takes the divisor's sign
        if result != 0.0 and (result < 0.0) != (b < 0.0):
            result += b
    elif op == "^":
        return _pow(a, b)
    elif op == "<":
        return 1.0 if a < b else 0.0
    elif op == "<=":
        return 1.0 if a <= b else 0.0
    elif op == ">":
        return 1.0 if a > b else 0.0
    elif op == ">=":
        return 1.0 if a >= b else 0.0
    elif op == "==":
        return 1.0 if a == b else 0.0
    elif op == "!=":
        return 1.0 if a != b else 0.0
    elif op == "&&":
        return 1.0 if a != 0.0 and b != 0.0 else 0.0
    elif op == "||":
        return 1.0 if a != 0.0 or b != 0.0 else 0.0
    else:
        raise DslTypeError(f"unknown operator {op!r}")
    if not math.isfinite(result):
        raise NumericError(f"operator {op!r} produced a non-finite value")
    return result


def _pow(a, b):
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if np.any((a_arr == 0.0) & (b_arr < 0.0)):
        raise NumericError("zero raised to a negative power")
    if np.any((a_arr < 0.0) & (b_arr != np.round(b_arr))):
        raise NumericError("negative base raised to a non-integer power")
    result = np.power(a_arr, b_arr)
    if not np.isfinite(result).all():
        raise NumericError("power produced a non-finite value")
    if isinstance(a, float) and isinstance(b, float):
        return float(result)
    return result


# --- builtins --------------------------------------------------------------------

def _check_finite(result, name: str):
    if isinstance(result, float):
        if not math.isfinite(result):
            raise NumericError(f"{name}() produced a non-finite value")
    elif not np.isfinite(result).all():
        raise NumericError(f"{name}() produced a non-finite value")
    return result


def _unary_math(fn, value, name: str, domain=None):
    if domain is not None:
        bad = domain(np.asarray(value))
        if np.any(bad):
            raise NumericError(f"{name}() outside its domain")
    if isinstance(value, float):
        return _check_finite(float(fn(value)), name)
    return _check_finite(fn(value), name)


def _reduce(fn, value: np.ndarray, name: str):
    if value.size == 0:
        if name == "sum":
            return 0.0
        raise NumericError(f"{name}() of an empty aggregate")
    return _check_finite(float(fn(value)), name)


def _eval_call(node: SyntaxTree, ctx: _Ctx):
    name = node.lexeme
    argc = len(node.children)

    def arg(i):
        return _eval(node.children[i], ctx)

    def need(n):
        if argc != n:
            raise DslTypeError(f"{name}() takes {n} argument(s), got {argc}")

    if name == "abs":
        need(1)
        v = arg(0)
        return abs(v) if isinstance(v, float) else np.abs(v)
    if name == "sqrt":
        need(1)
        return _unary_math(np.sqrt, arg(0), "sqrt", domain=lambda x: x < 0.0)
    if name == "log":
        need(1)
        return _unary_math(np.log, arg(0), "log", domain=lambda x: x <= 0.0)
    if name == "exp":
        need(1)
        return _unary_math(np.exp, arg(0), "exp")
    if name == "tanh":
        need(1)
        return _unary_math(np.tanh, arg(0), "tanh")
    if name == "floor":
        need(1)
        v = arg(0)
        return float(math.floor(v)) if isinstance(v, float) else np.floor(v)
    if name == "ceil":
        need(1)
        v = arg(0)
        return float(math.ceil(v)) if isinstance(v, float) else np.ceil(v)
    if name == "min":
        need(2)
        return _binary_minmax(np.minimum, arg(0), arg(1))
    if name == "max":
        need(2)
        return _binary_minmax(np.maximum, arg(0), arg(1))
    if name == "pow":
        need(2)
        return _pow(arg(0), arg(1))
    if name == "sum":
        need(1)
        v = arg(0)
        return v if isinstance(v, float) else _reduce(np.sum, v, "sum")
    if name == "mean":
        need(1)
        v = arg(0)
        return v if isinstance(v, float) else _reduce(np.mean, v, "mean")
    if name == "maxv":
        need(1)
        v = arg(0)
        return v if isinstance(v, float) else _reduce(np.max, v, "maxv")
    if name == "minv":
        need(1)
        v = arg(0)
        return v if isinstance(v, float) else _reduce(np.min, v, "minv")
    if name == "len":
        need(1)
        v = arg(0)
        if isinstance(v, np.ndarray) and v.ndim == 1:
            return float(v.shape[0])
        raise DslTypeError("len() takes a vector")
    if name == "rows":
        need(1)
        v = arg(0)
        if isinstance(v, np.ndarray) and v.ndim == 2:
            return float(v.shape[0])
        raise DslTypeError("rows() takes a matrix")
    if name == "cols":
        need(1)
        v = arg(0)
        if isinstance(v, np.ndarray) and v.ndim == 2:
            return float(v.shape[1])
        raise DslTypeError("cols() takes a matrix")
    if name == "zeros":
        if argc == 1:
            n = _as_size(arg(0))
            return np.zeros(n, dtype=np.float64)
        if argc == 2:
            r, c = _as_size(arg(0)), _as_size(arg(1))
            return np.zeros((r, c), dtype=np.float64)
        raise DslTypeError(f"zeros() takes 1 or 2 arguments, got {argc}")
    if name == "copy":
        need(1)
        v = arg(0)
        return v if isinstance(v, float) else v.copy()
    raise DslTypeError(f"unknown function {name!r}")


def _binary_minmax(fn, a, b):
    if isinstance(a, float) and isinstance(b, float):
        return float(fn(a, b))
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {shape_of(a)}{a.shape} vs {shape_of(b)}{b.shape}")
    return fn(a, b)


def _as_size(value) -> int:
    n = _as_index(value, "size")
    if n < 0:
        raise DslTypeError("size must be non-negative")
    return n

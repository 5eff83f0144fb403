"""Errors raised while parsing, validating, or executing heuristic programs."""

from __future__ import annotations


class DslError(Exception):
    """Base class for every DSL-level failure."""


class ParseError(DslError):
    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = expected
        detail = f"{message} at line {line}, column {column}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)


class SignatureError(DslError):
    """The program does not match the task signature it is evaluated under."""


class DslRuntimeError(DslError):
    """Base class for failures raised while executing a program."""


class StepBudgetExceeded(DslRuntimeError):
    pass


class NumericError(DslRuntimeError):
    """An operation produced (or would produce) a NaN or infinity."""


class ShapeError(DslRuntimeError):
    """Elementwise operation on incompatible shapes, or index out of bounds."""


class DslTypeError(DslRuntimeError):
    """Value of the wrong kind for an operation (e.g. indexing a scalar)."""

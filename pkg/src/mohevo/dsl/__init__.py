"""Sandboxed heuristic programming language: grammar, parser, and interpreter."""

from .errors import (
    DslError,
    DslRuntimeError,
    DslTypeError,
    NumericError,
    ParseError,
    ShapeError,
    SignatureError,
    StepBudgetExceeded,
)
from .interpreter import (
    DEFAULT_MAX_LOOP_TOTAL,
    DEFAULT_MAX_STEPS,
    ExecLimits,
    TaskSignature,
    Value,
    execute,
    shape_of,
    validate_signature,
)
from .nodes import NodeKind, SyntaxTree, count_subtrees, if_branches, pretty_print
from .parser import parse

__all__ = [
    "DEFAULT_MAX_LOOP_TOTAL",
    "DEFAULT_MAX_STEPS",
    "DslError",
    "DslRuntimeError",
    "DslTypeError",
    "ExecLimits",
    "NodeKind",
    "NumericError",
    "ParseError",
    "ShapeError",
    "SignatureError",
    "StepBudgetExceeded",
    "SyntaxTree",
    "TaskSignature",
    "Value",
    "count_subtrees",
    "execute",
    "if_branches",
    "parse",
    "pretty_print",
    "shape_of",
    "validate_signature",
]

"""Shared evaluation-harness pieces for the problem environments."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..dsl import (
    DslRuntimeError,
    ExecLimits,
    NumericError,
    ShapeError,
    StepBudgetExceeded,
    TaskSignature,
)


class ObjectiveMode(str, Enum):
    WALLTIME = "walltime"
    STEPCOST = "stepcost"


class HeuristicFailure(Exception):
    """A candidate heuristic failed during evaluation and must be discarded."""

    def __init__(self, category: str, message: str):
        self.category = category
        super().__init__(message)


class OutputShapeError(HeuristicFailure):
    """The heuristic returned a value of the wrong shape or with non-finite
    entries."""

    def __init__(self, message: str):
        super().__init__("invalid_output", message)


def failure_from_dsl(exc: DslRuntimeError) -> HeuristicFailure:
    if isinstance(exc, StepBudgetExceeded):
        category = "step_budget"
    elif isinstance(exc, NumericError):
        category = "numeric_error"
    elif isinstance(exc, ShapeError):
        category = "shape_error"
    else:
        category = "runtime_error"
    return HeuristicFailure(category, str(exc))


@dataclass(frozen=True)
class CodeRequirements:
    """Code-requirement text used in prompts: the full clause and the shorter
    inputs/outputs-only clause used by the simplification operator."""
    full: str
    io_only: str


@dataclass(frozen=True)
class TaskSpec:
    """Everything the prompt operators need to know about a task."""
    name: str
    signature: TaskSignature
    description: str
    requirements: CodeRequirements


class ProblemEnvironment:
    """Binds a task signature, an instance set, and objective measurement.

    Subclasses implement evaluate(tree, mode) -> (quality objective, cost
    objective), raising HeuristicFailure for candidates that must be discarded.
    """

    task: TaskSpec
    limits: ExecLimits

    def evaluate(self, tree, mode: ObjectiveMode) -> tuple[float, float]:
        raise NotImplementedError

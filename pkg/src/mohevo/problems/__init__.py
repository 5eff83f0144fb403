"""Problem environments: online bin packing and GLS-based TSP."""

from .base import (
    CodeRequirements,
    HeuristicFailure,
    ObjectiveMode,
    OutputShapeError,
    ProblemEnvironment,
    TaskSpec,
)

__all__ = [
    "CodeRequirements",
    "HeuristicFailure",
    "ObjectiveMode",
    "OutputShapeError",
    "ProblemEnvironment",
    "TaskSpec",
]

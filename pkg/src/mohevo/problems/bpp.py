"""Online bin packing environment.

Items arrive one at a time and are placed greedily: the candidate heuristic
scores every feasible bin and the item goes to the argmax (ties to the lowest
bin index). One candidate bin is maintained per item, each starting at full
capacity; bins still at full capacity at the end do not count as used.

Instance items are integer sizes drawn as ceil(Weibull(shape=3, scale=45))
clamped to [1, capacity]. The Weibull parameters are a benchmark convention,
not part of any interface; they are configurable.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dsl import DslRuntimeError, ExecLimits, SyntaxTree, TaskSignature, execute
from .base import (
    CodeRequirements,
    HeuristicFailure,
    ObjectiveMode,
    OutputShapeError,
    TaskSpec,
    failure_from_dsl,
)

WEIBULL_SHAPE = 3.0
WEIBULL_SCALE = 45.0

DEFAULT_CAPACITY = 100
DEFAULT_N_ITEMS = 5000
DEFAULT_EVAL_SEEDS = (101, 102, 103, 104, 105)

WALLTIME_REPEATS = 3

# Untouched bins stay selectable by default; the alternative reading keeps them
# out of the feasible set until no started bin fits.
UNTOUCHED_SELECTABLE = "selectable"
UNTOUCHED_EXCLUDED = "excluded_until_needed"

BPP_SIGNATURE = TaskSignature("score", (("item", "scalar"), ("bins", "vector")), "vector")

BPP_TASK_DESCRIPTION = (
    "I need help designing a novel score function that scoring a set of bins to "
    "assign an item. In each step, the item will be assigned to the bin with the "
    "maximum score. If the rest capacity of a bin equals the maximum capacity, it "
    "will not be used. The final goal is to minimize the number of used bins."
)

_BPP_IO_CLAUSE = (
    'This function should accept 2 inputs: ["item", "bins"]. The function should '
    'return 1 output: ["scores"]. "item" and "bins" are the size of the current '
    "item and the rest capacities of feasible bins, which are larger than the item "
    'size. The output named "scores" is the scores for the bins for assignment. '
    '"item" is a scalar, "bins" is a vector, and "scores" must be a vector with '
    "one entry per bin."
)

BPP_CODE_REQUIREMENTS = CodeRequirements(
    full=(
        'implement it in the mini language below as a function named "score". '
        + _BPP_IO_CLAUSE
        + " Avoid utilizing any random component, and it is crucial to maintain "
        "self-consistency."
    ),
    io_only=_BPP_IO_CLAUSE,
)

BPP_TASK = TaskSpec("bpp", BPP_SIGNATURE, BPP_TASK_DESCRIPTION, BPP_CODE_REQUIREMENTS)


@dataclass(frozen=True)
class BppInstance:
    capacity: int
    items: tuple[int, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("instance has no items")
        if any(item < 1 or item > self.capacity for item in self.items):
            raise ValueError("every item must lie in [1, capacity]")


@dataclass(frozen=True)
class BppReport:
    bins_used: int
    lower_bound: int
    gap: float
    cost: float


def generate_weibull_instance(n: int, capacity: int, seed: int,
                              shape: float = WEIBULL_SHAPE,
                              scale: float = WEIBULL_SCALE) -> BppInstance:
    if n < 1 or capacity < 1:
        raise ValueError("need n >= 1 and capacity >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.weibull(shape, n) * scale
    items = np.clip(np.ceil(draws).astype(np.int64), 1, capacity)
    return BppInstance(capacity, tuple(int(x) for x in items))


def lower_bound(inst: BppInstance) -> int:
    total = sum(inst.items)  # exact integer arithmetic
    return -(-total // inst.capacity)


def save_instance(inst: BppInstance, path: Path) -> None:
    lines = [f"{inst.capacity} {len(inst.items)}"]
    lines.extend(str(item) for item in inst.items)
    Path(path).write_text("\n".join(lines) + "\n")


def load_instance(path: Path) -> BppInstance:
    lines = Path(path).read_text().split()
    capacity, n = int(lines[0]), int(lines[1])
    items = tuple(int(x) for x in lines[2:2 + n])
    if len(items) != n:
        raise ValueError(f"instance file {path} announces {n} items, has {len(items)}")
    return BppInstance(capacity, items)


def simulate_online(inst: BppInstance, heuristic: SyntaxTree,
                    limits: ExecLimits | None = None,
                    untouched_rule: str = UNTOUCHED_SELECTABLE) -> tuple[int, int]:
    """Run the greedy score-and-assign loop; returns (bins_used, total interpreter
    steps). Raises HeuristicFailure/OutputShapeError for bad candidates."""
    capacity = float(inst.capacity)
    n = len(inst.items)
    remaining = np.full(n, capacity, dtype=np.float64)
    total_steps = 0
    for item in inst.items:
        item_f = float(item)
        fits = remaining >= item_f
        if untouched_rule == UNTOUCHED_EXCLUDED:
            started = remaining < capacity
            started_fits = np.flatnonzero(fits & started)
            if started_fits.size > 0:
                feasible = started_fits
            else:
                feasible = np.flatnonzero(fits & ~started)[:1]
        else:
            feasible = np.flatnonzero(fits)
        assert feasible.size > 0, "a fresh bin always fits"
        try:
            value, steps = execute(heuristic, [item_f, remaining[feasible]], limits)
        except DslRuntimeError as exc:
            raise failure_from_dsl(exc) from exc
        total_steps += steps
        if not isinstance(value, np.ndarray) or value.ndim != 1:
            raise OutputShapeError("score function must return a vector")
        if value.shape[0] != feasible.size:
            raise OutputShapeError(
                f"score vector has length {value.shape[0]}, expected {feasible.size}")
        if not np.isfinite(value).all():
            raise OutputShapeError("score vector contains non-finite entries")
        chosen = int(feasible[int(np.argmax(value))])
        remaining[chosen] -= item_f
        assert remaining[chosen] >= 0.0, "assignment must respect capacity"
    bins_used = int(np.count_nonzero(remaining < capacity))
    return bins_used, total_steps


def evaluate_bpp(heuristic: SyntaxTree, instances: list[BppInstance],
                 mode: ObjectiveMode, limits: ExecLimits | None = None,
                 untouched_rule: str = UNTOUCHED_SELECTABLE) -> tuple[float, float]:
    """Bi-objective evaluation: (mean optimality gap, running cost)."""
    if not instances:
        raise ValueError("need at least one instance")
    gaps = []
    total_steps = 0
    started = time.perf_counter()
    for inst in instances:
        bins_used, steps = simulate_online(inst, heuristic, limits, untouched_rule)
        lb = lower_bound(inst)
        gaps.append((bins_used - lb) / lb)
        total_steps += steps
    elapsed = time.perf_counter() - started
    mean_gap = sum(gaps) / len(gaps)

    if mode is ObjectiveMode.STEPCOST:
        return mean_gap, float(total_steps)

    timings = [elapsed]
    for _ in range(WALLTIME_REPEATS - 1):
        started = time.perf_counter()
        for inst in instances:
            simulate_online(inst, heuristic, limits, untouched_rule)
        timings.append(time.perf_counter() - started)
    return mean_gap, statistics.median(timings)


def instance_report(inst: BppInstance, heuristic: SyntaxTree,
                    limits: ExecLimits | None = None,
                    untouched_rule: str = UNTOUCHED_SELECTABLE) -> BppReport:
    bins_used, steps = simulate_online(inst, heuristic, limits, untouched_rule)
    lb = lower_bound(inst)
    return BppReport(bins_used, lb, (bins_used - lb) / lb, float(steps))


@dataclass
class BppEnvironment:
    """Evaluation harness for the bin-packing task."""
    instances: list[BppInstance]
    limits: ExecLimits = field(default_factory=ExecLimits)
    untouched_rule: str = UNTOUCHED_SELECTABLE
    task: TaskSpec = field(default=BPP_TASK, repr=False)

    def evaluate(self, tree: SyntaxTree, mode: ObjectiveMode) -> tuple[float, float]:
        return evaluate_bpp(tree, self.instances, mode, self.limits, self.untouched_rule)


def default_instances(n_items: int = DEFAULT_N_ITEMS, capacity: int = DEFAULT_CAPACITY,
                      seeds: tuple[int, ...] = DEFAULT_EVAL_SEEDS) -> list[BppInstance]:
    return [generate_weibull_instance(n_items, capacity, seed) for seed in seeds]

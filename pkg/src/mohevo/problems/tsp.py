"""Traveling-salesman environment built around guided local search.

The pipeline: build a nearest-neighbor tour, then alternate (a) best-improvement
local search over the swap and relocate neighborhoods on the true distances with
(b) a perturbation phase where the candidate heuristic rewrites a working copy
of the distance matrix and the search continues on it. The best tour is always
scored on the true distances.
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

IMPROVEMENT_TOL = 1e-10
HELD_KARP_MAX_NODES = 13
WALLTIME_REPEATS = 3

TSP_SIGNATURE = TaskSignature(
    "update_edge_distance",
    (("edge_distance", "matrix"), ("local_opt_tour", "vector"), ("edge_n_used", "matrix")),
    "matrix",
)

TSP_TASK_DESCRIPTION = (
    "Given an edge distance matrix and a local optimal route, please help me "
    "design a strategy to update the distance matrix to avoid being trapped in "
    "the local optimum with the final goal of finding a tour with minimized "
    "distance. You should create a heuristic for me to update the edge distance "
    "matrix."
)

_TSP_IO_CLAUSE = (
    'This function should accept 3 inputs: ["edge_distance", "local_opt_tour", '
    '"edge_n_used"]. The function should return 1 output: '
    '["updated_edge_distance"]. "local_opt_tour" includes the local optimal tour '
    'of IDs, "edge_distance" and "edge_n_used" are matrices, "edge_n_used" '
    "includes the number of each edge used during permutation. "
    '"local_opt_tour" is a vector; the output must be a matrix with the same '
    "shape as the input distance matrix."
)

TSP_CODE_REQUIREMENTS = CodeRequirements(
    full=(
        "implement it in the mini language below as a function named "
        '"update_edge_distance". ' + _TSP_IO_CLAUSE
        + " Avoid utilizing any random component, and it is crucial to maintain "
        "self-consistency."
    ),
    io_only=_TSP_IO_CLAUSE,
)

TSP_TASK = TaskSpec("tsp", TSP_SIGNATURE, TSP_TASK_DESCRIPTION, TSP_CODE_REQUIREMENTS)


class FormatError(ValueError):
    pass


class UnsupportedEdgeWeightType(FormatError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TspInstance:
    name: str
    distance: np.ndarray
    coords: tuple | None = None

    def __post_init__(self):
        d = self.distance
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 3:
            raise ValueError("distance must be a square matrix over >= 3 nodes")
        if not np.allclose(d, d.T) or np.any(np.diag(d) != 0) or np.any(d < 0):
            raise ValueError("distance must be symmetric, non-negative, zero-diagonal")

    @property
    def n(self) -> int:
        return self.distance.shape[0]


def generate_uniform_instance(n: int, seed: int) -> TspInstance:
    """Nodes drawn i.i.d. uniform on the unit square, Euclidean distances."""
    if n < 3:
        raise ValueError("need at least 3 nodes")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    deltas = coords[:, None, :] - coords[None, :, :]
    distance = np.sqrt((deltas ** 2).sum(axis=2))
    np.fill_diagonal(distance, 0.0)
    return TspInstance(f"uniform{n}_s{seed}", distance,
                       tuple(map(tuple, coords.tolist())))


def load_tsplib(path: Path) -> TspInstance:
    """Parse the TSPLIB subset: NAME, TYPE TSP, DIMENSION, EDGE_WEIGHT_TYPE
    EUC_2D, NODE_COORD_SECTION, EOF. Distances follow the TSPLIB convention of
    rounding the Euclidean distance half-up to the nearest integer."""
    path = Path(path)
    name = path.stem
    dimension = None
    edge_type = None
    coords: dict[int, tuple[float, float]] = {}
    in_coords = False
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line == "EOF":
            in_coords = False
            continue
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: bad coordinate line {raw!r}")
            try:
                idx = int(parts[0])
                coords[idx] = (float(parts[1]), float(parts[2]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad coordinate line {raw!r}") from exc
            continue
        if line == "NODE_COORD_SECTION":
            in_coords = True
            continue
        if ":" in line:
            key, _, value = line.partition(":")
            key, value = key.strip(), value.strip()
            if key == "NAME":
                name = value
            elif key == "DIMENSION":
                try:
                    dimension = int(value)
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad DIMENSION {value!r}") from exc
            elif key == "EDGE_WEIGHT_TYPE":
                edge_type = value
            elif key == "TYPE" and value != "TSP":
                raise FormatError(f"{path}:{lineno}: unsupported TYPE {value!r}")
            continue
        raise FormatError(f"{path}:{lineno}: unrecognized line {raw!r}")
    if edge_type != "EUC_2D":
        raise UnsupportedEdgeWeightType(f"{path}: EDGE_WEIGHT_TYPE {edge_type!r}")
    if dimension is None or len(coords) != dimension:
        raise FormatError(
            f"{path}: DIMENSION {dimension} does not match {len(coords)} coordinates")
    points = np.array([coords[i] for i in range(1, dimension + 1)])
    deltas = points[:, None, :] - points[None, :, :]
    euclid = np.sqrt((deltas ** 2).sum(axis=2))
    distance = np.floor(euclid + 0.5)  # TSPLIB nint: round half up
    np.fill_diagonal(distance, 0.0)
    return TspInstance(name, distance, tuple(map(tuple, points.tolist())))


def load_reference_lengths(path: Path) -> dict[str, float]:
    """Read "name length" lines."""
    refs: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'name length'")
        refs[parts[0]] = float(parts[1])
    return refs


def tour_length(order, matrix: np.ndarray) -> float:
    order = np.asarray(order, dtype=np.intp)
    return float(matrix[order, np.roll(order, -1)].sum())


def nearest_neighbor_tour(inst: TspInstance, start: int) -> list[int]:
    """Greedy tour visiting the nearest unvisited node, ties to the lowest index."""
    n = inst.n
    if not 0 <= start < n:
        raise ValueError(f"start node {start} out of range")
    distance = inst.distance
    visited = np.zeros(n, dtype=bool)
    order = [start]
    visited[start] = True
    current = start
    for _ in range(n - 1):
        row = np.where(visited, np.inf, distance[current])
        current = int(np.argmin(row))  # argmin takes the first (lowest index) tie
        order.append(current)
        visited[current] = True
    return order


_TRIL_CACHE: dict[int, np.ndarray] = {}


def _tril_mask(n: int) -> np.ndarray:
    mask = _TRIL_CACHE.get(n)
    if mask is None:
        mask = np.tril(np.ones((n, n), dtype=bool))
        _TRIL_CACHE[n] = mask
    return mask


def _move_deltas(order: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Length changes of every swap and every relocate move.

    swap[i, j] (i < j): exchange the nodes at tour positions i and j.
    rel[i, j]: remove the node at position i, reinsert it right after the node
    at position j. Invalid cells hold +inf.
    """
    n = order.shape[0]
    b = order
    p = np.concatenate((order[-1:], order[:-1]))   # predecessor nodes
    s = np.concatenate((order[1:], order[:1]))     # successor nodes
    d_succ = d[b, s]                               # edge (pos i) -> (pos i+1)
    d_pred = np.concatenate((d_succ[-1:], d_succ[:-1]))

    g_pb = d[p[:, None], b[None, :]]               # D[P[i], B[j]]
    g_bs = d[b[:, None], s[None, :]]               # D[B[i], S[j]]
    col_pred = d_pred[:, None]
    col_succ = d_succ[:, None]

    swap = (g_pb + g_bs.T + g_pb.T + g_bs
            - col_pred - col_succ - d_pred[None, :] - d_succ[None, :])
    # adjacent pairs share an edge; overwrite with the 2-edge formula
    i = np.arange(n - 1)
    swap[i, i + 1] = d[p[i], b[i + 1]] + d[b[i], s[i + 1]] - d_pred[i] - d_succ[i + 1]
    swap[0, n - 1] = d[p[n - 1], b[0]] + d[b[n - 1], s[0]] - d_pred[n - 1] - d_succ[0]
    swap[_tril_mask(n)] = np.inf                   # only i < j is a move

    removal = d_pred + d_succ - d[p, s]
    rel = d[b[:, None], b[None, :]].T + g_bs - d_succ[None, :] - removal[:, None]
    idx = np.arange(n)
    rel[idx, idx] = np.inf                         # node is not there any more
    rel[idx, (idx - 1) % n] = np.inf               # reinserting before itself is a no-op
    return swap, rel


def _apply_relocate(order: np.ndarray, i: int, j: int) -> np.ndarray:
    node = order[i]
    rest = np.delete(order, i)
    slot = j if j < i else j - 1
    return np.insert(rest, slot + 1, node)


def local_search(tour, matrix: np.ndarray) -> list[int]:
    """Best-improvement passes over the swap and relocate neighborhoods until no
    move strictly improves the tour under `matrix`. The scan order (swaps by
    ascending position pair, then relocates) breaks ties deterministically."""
    order = np.asarray(tour, dtype=np.intp).copy()
    n = order.shape[0]
    while True:
        swap, rel = _move_deltas(order, matrix)
        swap_flat = int(np.argmin(swap))
        rel_flat = int(np.argmin(rel))
        best_swap = swap.flat[swap_flat]
        best_rel = rel.flat[rel_flat]
        if min(best_swap, best_rel) >= -IMPROVEMENT_TOL:
            return order.tolist()
        if best_swap <= best_rel:
            i, j = divmod(swap_flat, n)
            order[i], order[j] = order[j], order[i]
        else:
            i, j = divmod(rel_flat, n)
            order = _apply_relocate(order, i, j)


def gls_solve(inst: TspInstance, heuristic: SyntaxTree, max_iters: int,
              time_budget: float, limits: ExecLimits | None = None,
              on_iteration=None) -> tuple[list[int], float, int]:
    """Guided local search driven by a distance-matrix-updating heuristic.

    Returns (best tour, best length under true distances, total interpreter
    steps). The time budget is checked between iterations; an iteration in
    flight always completes. `on_iteration(best_length)` is invoked once per
    completed iteration when provided.
    """
    n = inst.n
    true_distance = inst.distance
    edge_n_used = np.zeros((n, n), dtype=np.float64)
    current = np.asarray(nearest_neighbor_tour(inst, 0), dtype=np.intp)
    best = current.tolist()
    best_length = tour_length(best, true_distance)
    total_steps = 0
    started = time.perf_counter()

    for _ in range(max_iters):
        if time.perf_counter() - started > time_budget:
            break
        current = np.asarray(local_search(current, true_distance), dtype=np.intp)
        length = tour_length(current, true_distance)
        if length < best_length:
            best_length = length
            best = current.tolist()
        succ = np.roll(current, -1)
        edge_n_used[current, succ] += 1.0
        edge_n_used[succ, current] += 1.0
        try:
            working, steps = execute(
                heuristic,
                [true_distance.copy(), current.astype(np.float64), edge_n_used],
                limits,
            )
        except DslRuntimeError as exc:
            raise failure_from_dsl(exc) from exc
        total_steps += steps
        if not isinstance(working, np.ndarray) or working.shape != (n, n):
            raise OutputShapeError(f"updated distance matrix must be {n}x{n}")
        if not np.isfinite(working).all():
            raise OutputShapeError("updated distance matrix has non-finite entries")
        current = np.asarray(local_search(current, working), dtype=np.intp)
        if on_iteration is not None:
            on_iteration(best_length)

    return best, best_length, total_steps


def exact_solve_small(inst: TspInstance) -> tuple[list[int], float]:
    """Held-Karp dynamic program; exact optimum for n <= 13."""
    n = inst.n
    if n > HELD_KARP_MAX_NODES:
        raise TooLarge(f"exact solver limited to {HELD_KARP_MAX_NODES} nodes, got {n}")
    d = inst.distance
    size = 1 << n
    dp = np.full((size, n), np.inf)
    parent = np.full((size, n), -1, dtype=np.intp)
    dp[1, 0] = 0.0
    for mask in range(1, size):
        if not mask & 1:
            continue
        lasts = [v for v in range(n) if mask & (1 << v) and np.isfinite(dp[mask, v])]
        if not lasts:
            continue
        nexts = [v for v in range(n) if not mask & (1 << v)]
        if not nexts:
            continue
        costs = dp[mask, lasts][:, None] + d[np.ix_(lasts, nexts)]
        best_src = np.argmin(costs, axis=0)
        best_cost = costs[best_src, np.arange(len(nexts))]
        for k, v in enumerate(nexts):
            new_mask = mask | (1 << v)
            if best_cost[k] < dp[new_mask, v]:
                dp[new_mask, v] = best_cost[k]
                parent[new_mask, v] = lasts[best_src[k]]
    full = size - 1
    closing = dp[full, :] + d[:, 0]
    closing[0] = np.inf if n > 1 else closing[0]
    last = int(np.argmin(closing))
    length = float(closing[last])
    order = []
    mask, v = full, last
    while v != -1:
        order.append(v)
        mask, v = mask ^ (1 << v), int(parent[mask, v])
    order.reverse()
    return order, length


def evaluate_tsp(heuristic: SyntaxTree, instances: list[TspInstance],
                 reference_lengths: list[float], max_iters: int,
                 time_budget: float, mode: ObjectiveMode,
                 limits: ExecLimits | None = None) -> tuple[float, float]:
    """Bi-objective evaluation: (mean relative gap to references, running cost)."""
    if not instances:
        raise ValueError("need at least one instance")
    if len(reference_lengths) != len(instances) or any(r <= 0 for r in reference_lengths):
        raise ValueError("reference lengths must be positive and aligned with instances")
    gaps = []
    total_steps = 0
    started = time.perf_counter()
    for inst, ref in zip(instances, reference_lengths):
        _, best_length, steps = gls_solve(inst, heuristic, max_iters, time_budget, limits)
        gaps.append((best_length - ref) / ref)
        total_steps += steps
    elapsed = time.perf_counter() - started
    mean_gap = sum(gaps) / len(gaps)

    if mode is ObjectiveMode.STEPCOST:
        return mean_gap, float(total_steps)

    timings = [elapsed]
    for _ in range(WALLTIME_REPEATS - 1):
        started = time.perf_counter()
        for inst in instances:
            gls_solve(inst, heuristic, max_iters, time_budget, limits)
        timings.append(time.perf_counter() - started)
    return mean_gap, statistics.median(timings)


@dataclass
class TspEnvironment:
    """Evaluation harness for the distance-matrix-update task."""
    instances: list[TspInstance]
    reference_lengths: list[float]
    max_iters: int = 1000
    time_budget: float = 60.0
    limits: ExecLimits = field(default_factory=ExecLimits)
    task: TaskSpec = field(default=TSP_TASK, repr=False)

    def evaluate(self, tree: SyntaxTree, mode: ObjectiveMode) -> tuple[float, float]:
        return evaluate_tsp(tree, self.instances, self.reference_lengths,
                            self.max_iters, self.time_budget, mode, self.limits)


def local_search_references(instances: list[TspInstance]) -> list[float]:
    """Deterministic fallback reference lengths: local search from the
    nearest-neighbor tour on the true distances. Only a baseline, not an
    optimum; gaps measured against it can be negative."""
    refs = []
    for inst in instances:
        tour = local_search(nearest_neighbor_tour(inst, 0), inst.distance)
        refs.append(tour_length(tour, inst.distance))
    return refs


def exact_references(instances: list[TspInstance]) -> list[float]:
    return [exact_solve_small(inst)[1] for inst in instances]

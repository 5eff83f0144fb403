"""Evolution core: code-valued individuals, dominance-dissimilarity selection,
population management strategies, and the generational loop.

Each member of the population gets a score v[j] = -(sum of AST similarities of
the members that dominate it to itself): 0 for non-dominated members, more
negative the more it is dominated by structurally similar code. Parents are
sampled with probability softmax(v); survivors are the top N by v. Alternative
management strategies (non-dominated sorting with crowding distance, a
Tchebycheff decomposition, and a quality-only single-objective mode) are
provided for ablation runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .archive import AttemptRecord, GenerationSnapshot, RunArchive
from .dsl import ParseError, SignatureError, SyntaxTree, parse, pretty_print, validate_signature
from .operators import Operator, ResponseFormatError, parse_response
from .pareto import Bounds, dominates, hypervolume, nondominated_filter, normalize
from .problems.base import HeuristicFailure, ObjectiveMode, ProblemEnvironment
from .similarity import dissimilarity_matrix


class Management(str, Enum):
    DOMINANCE_DISSIMILARITY = "dominance_dissimilarity"
    NSGA2 = "nsga2"
    MOEAD = "moead"
    SINGLE_OBJECTIVE = "single_objective"


OPERATOR_CYCLE = (Operator.E1, Operator.E2, Operator.M1, Operator.M2, Operator.M3)


class InitializationExhausted(RuntimeError):
    """Fewer than two valid heuristics could be produced within the retry
    budget."""


@dataclass(eq=False)
class Heuristic:
    id: int
    description: str
    source: str                      # canonical pretty-printed text
    tree: SyntaxTree
    objectives: tuple[float, float]
    generation: int
    operator: Operator
    parent_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if not all(np.isfinite(v) for v in self.objectives):
            raise ValueError("heuristics enter populations fully evaluated")


@dataclass
class Population:
    members: list[Heuristic]
    capacity: int

    def __post_init__(self):
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError("member ids must be distinct")

    def trees(self) -> list[SyntaxTree]:
        return [m.tree for m in self.members]

    def objective_list(self) -> list[tuple[float, float]]:
        return [m.objectives for m in self.members]


@dataclass(frozen=True)
class DominanceDissimilarityScores:
    scores: np.ndarray          # v, one entry per member, all <= 0
    probabilities: np.ndarray   # softmax(v), strictly positive, sums to 1


@dataclass(frozen=True)
class RunConfig:
    N: int
    T: int
    d: int
    seed: int
    management: Management = Management.DOMINANCE_DISSIMILARITY
    objective_mode: ObjectiveMode = ObjectiveMode.STEPCOST
    problem: str = "bpp"
    run_id: str | None = None
    pool_grows_within_generation: bool = True
    init_attempt_factor: int = 5
    operator_cycle: tuple[Operator, ...] = OPERATOR_CYCLE

    def __post_init__(self):
        if not (self.N >= self.d >= 1):
            raise ValueError("need N >= d >= 1")
        if self.T < 1:
            raise ValueError("need T >= 1")
        if not self.operator_cycle or Operator.INIT in self.operator_cycle:
            raise ValueError("operator_cycle must be non-empty search operators")

    def resolved_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        return f"{self.problem}-{self.management.value}-seed{self.seed}"


# --- dominance-dissimilarity machinery -----------------------------------------

def dominance_mask(pop: Population) -> np.ndarray:
    """mask[i, j] = 1 iff member i dominates member j; zero diagonal."""
    objs = pop.objective_list()
    n = len(objs)
    mask = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            if i != j and dominates(objs[i], objs[j]):
                mask[i, j] = 1.0
    return mask


def dd_scores(pop: Population, dissimilarity: np.ndarray) -> DominanceDissimilarityScores:
    """Masked column sums of the dissimilarity matrix and their softmax.

    v[j] = -(sum over dominators i of AST similarity of i to j); non-dominated
    members score exactly 0. Column sums use exact (correctly rounded) float
    summation so scores are independent of accumulation order.
    """
    mask = dominance_mask(pop)
    masked = dissimilarity * mask
    v = np.array([math.fsum(masked[:, j]) for j in range(masked.shape[1])])
    shifted = np.exp(v - v.max())
    return DominanceDissimilarityScores(scores=v, probabilities=shifted / shifted.sum())


def _sample_without_replacement(probabilities: np.ndarray, d: int,
                                rng: np.random.Generator) -> list[int]:
    """Sequential renormalized draws; deterministic given the rng state."""
    available = list(range(len(probabilities)))
    chosen: list[int] = []
    for _ in range(d):
        weights = probabilities[available]
        weights = weights / weights.sum()
        u = rng.random()
        k = int(np.searchsorted(np.cumsum(weights), u, side="right"))
        k = min(k, len(available) - 1)
        chosen.append(available.pop(k))
    return chosen


def select_parents(pop: Population, scores: DominanceDissimilarityScores, d: int,
                   rng: np.random.Generator) -> list[Heuristic]:
    """Draw d members without replacement, proportional to softmax(v)."""
    if d > len(pop.members):
        raise ValueError(f"cannot draw {d} parents from {len(pop.members)} members")
    idx = _sample_without_replacement(scores.probabilities, d, rng)
    return [pop.members[i] for i in idx]


# --- population management strategies ---------------------------------------------

def manage_population(pop: Population, n_keep: int) -> Population:
    """Keep the n best members by recomputed dominance-dissimilarity score,
    ties broken by lexicographically smaller objectives, then smaller id."""
    members = pop.members
    scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
    v = scores.scores
    order = sorted(range(len(members)),
                   key=lambda i: (-v[i], members[i].objectives, members[i].id))
    return Population([members[i] for i in order[:n_keep]], n_keep)


def manage_nsga2(pop: Population, n_keep: int) -> Population:
    """Fast non-dominated sorting; the split front is truncated by descending
    crowding distance (boundary points infinite), ties to the earlier member."""
    members = pop.members
    objs = pop.objective_list()
    remaining = list(range(len(members)))
    kept: list[int] = []
    while remaining:
        local = nondominated_filter([objs[i] for i in remaining])
        front = [remaining[k] for k in local]
        if len(kept) + len(front) <= n_keep:
            kept.extend(front)
            remaining = [i for i in remaining if i not in set(front)]
            if len(kept) == n_keep:
                break
            continue
        slots = n_keep - len(kept)
        crowd = _crowding_distances(front, objs)
        ranked = sorted(front, key=lambda i: (-crowd[i], i))
        kept.extend(ranked[:slots])
        break
    return Population([members[i] for i in sorted(kept)], n_keep)


def _crowding_distances(front: list[int], objs) -> dict[int, float]:
    crowd = {i: 0.0 for i in front}
    m = len(objs[front[0]])
    for axis in range(m):
        axis_sorted = sorted(front, key=lambda i: objs[i][axis])
        crowd[axis_sorted[0]] = np.inf
        crowd[axis_sorted[-1]] = np.inf
        span = objs[axis_sorted[-1]][axis] - objs[axis_sorted[0]][axis]
        if span <= 0:
            continue
        for k in range(1, len(axis_sorted) - 1):
            i = axis_sorted[k]
            crowd[i] += (objs[axis_sorted[k + 1]][axis]
                         - objs[axis_sorted[k - 1]][axis]) / span
    return crowd


def uniform_weights(n: int, m: int = 2) -> list[tuple[float, ...]]:
    """Evenly spread 2-objective weight vectors; the single-weight case points
    at the first objective."""
    if m != 2:
        raise ValueError("weights are generated for 2 objectives")
    if n == 1:
        return [(1.0, 0.0)]
    firsts = np.linspace(1.0, 0.0, n)
    return [(float(w), float(1.0 - w)) for w in firsts]


def manage_moead_like(pop: Population, n_keep: int,
                      weights: list[tuple[float, ...]]) -> Population:
    """Each weight keeps the unassigned member minimizing the Tchebycheff value
    over objectives normalized within the population."""
    if len(weights) != n_keep:
        raise ValueError("need exactly one weight vector per kept slot")
    members = pop.members
    if n_keep > len(members):
        raise ValueError("cannot keep more members than the population holds")
    bounds = Bounds.from_points(pop.objective_list())
    normalized = [normalize(m.objectives, bounds) for m in members]
    unassigned = list(range(len(members)))
    kept: list[int] = []
    for w in weights:
        best_idx = min(unassigned,
                       key=lambda i: (max(wi * abs(fi) for wi, fi in zip(w, normalized[i])), i))
        kept.append(best_idx)
        unassigned.remove(best_idx)
    return Population([members[i] for i in kept], n_keep)


def manage_single_objective(pop: Population, n_keep: int) -> Population:
    """Quality-only truncation: keep the n lowest first objectives."""
    members = sorted(pop.members, key=lambda m: (m.objectives[0], m.id))
    return Population(members[:n_keep], n_keep)


def _manage(pop: Population, config: RunConfig) -> Population:
    if config.management is Management.NSGA2:
        return manage_nsga2(pop, config.N)
    if config.management is Management.MOEAD:
        return manage_moead_like(pop, config.N, uniform_weights(config.N))
    if config.management is Management.SINGLE_OBJECTIVE:
        return manage_single_objective(pop, config.N)
    return manage_population(pop, config.N)


# --- generational loop ----------------------------------------------------------------

@dataclass
class _Admission:
    heuristic: Heuristic | None
    failure_category: str | None
    description: str
    source: str


def _try_admit(text: str, env: ProblemEnvironment, mode: ObjectiveMode,
               pool: list[Heuristic], next_id: int, generation: int,
               operator: Operator, parent_ids: tuple[int, ...]) -> _Admission:
    description, source = "", ""
    try:
        response = parse_response(text)
        description = response.description
        tree = parse(response.code)
        source = pretty_print(tree)
        validate_signature(tree, env.task.signature)
        if any(member.source == source for member in pool):
            return _Admission(None, "duplicate", description, source)
        objectives = env.evaluate(tree, mode)
    except ResponseFormatError as exc:
        return _Admission(None, exc.category, description, source)
    except ParseError:
        return _Admission(None, "parse_error", description, source)
    except SignatureError:
        return _Admission(None, "signature_error", description, source)
    except HeuristicFailure as exc:
        return _Admission(None, exc.category, description, source)
    heuristic = Heuristic(
        id=next_id, description=description, source=source, tree=tree,
        objectives=(float(objectives[0]), float(objectives[1])),
        generation=generation, operator=operator, parent_ids=parent_ids,
    )
    return _Admission(heuristic, None, description, source)


def _live_front_hv(archive: RunArchive, pop: Population) -> float:
    admitted = [r.objectives for r in archive.admitted()]
    if not admitted or not pop.members:
        return 0.0
    bounds = Bounds.from_points(admitted)
    front = [pop.members[i].objectives for i in nondominated_filter(pop.objective_list())]
    return hypervolume([normalize(p, bounds) for p in front])


def run_evolution(config: RunConfig, source, env: ProblemEnvironment,
                  progress=None) -> tuple[Population, RunArchive]:
    """The full generational loop.

    Initialization fills the population with up to N evaluated heuristics from
    the init operator under a bounded retry budget. Each generation produces N
    offspring (parent selection, operator invocation, evaluation, append), then
    management truncates back to N. Every attempt, admitted or failed, lands in
    the archive; per-generation snapshots record member ids and scores.
    """
    mode = config.objective_mode
    archive = RunArchive(run_id=config.resolved_run_id(), config=_config_dict(config, env))
    streams = np.random.SeedSequence(config.seed).spawn(config.T + 1)
    stamp = (lambda: time.time()) if mode is ObjectiveMode.WALLTIME else (lambda: None)

    pool: list[Heuristic] = []
    next_record_id = 0
    init_rng = np.random.default_rng(streams[0])
    for _ in range(config.init_attempt_factor * config.N):
        if len(pool) >= config.N:
            break
        text = source.generate(Operator.INIT, [], init_rng)
        admission = _try_admit(text, env, mode, pool, next_record_id, 0,
                               Operator.INIT, ())
        _record(archive, admission, next_record_id, 0, Operator.INIT, (), stamp())
        next_record_id += 1
        if admission.heuristic is not None:
            pool.append(admission.heuristic)
    if len(pool) < 2:
        raise InitializationExhausted(
            f"only {len(pool)} valid heuristics after the retry budget")

    pop = Population(pool, config.N)
    _snapshot(archive, 0, pop)
    if progress is not None:
        progress(0, len(pop.members), _front_size(pop), _live_front_hv(archive, pop))

    for t in range(1, config.T + 1):
        slot_streams = streams[t].spawn(config.N)
        admitted_count = 0
        frozen_pool = list(pop.members)
        for slot in range(config.N):
            rng = np.random.default_rng(slot_streams[slot])
            kind = config.operator_cycle[slot % len(config.operator_cycle)]
            selection_pool = pop.members if config.pool_grows_within_generation else frozen_pool
            selection = Population(list(selection_pool), config.N)
            scores = dd_scores(selection, dissimilarity_matrix(selection.trees()))
            d_eff = min(config.d, len(selection.members))
            drawn_idx = _sample_without_replacement(scores.probabilities, d_eff, rng)
            if kind in (Operator.E1, Operator.E2):
                parents = [selection.members[i] for i in drawn_idx]
            else:
                top = max(drawn_idx, key=lambda i: (scores.probabilities[i], -i))
                parents = [selection.members[top]]
            parent_ids = tuple(p.id for p in parents)
            text = source.generate(kind, parents, rng)
            admission = _try_admit(text, env, mode, pop.members, next_record_id, t,
                                   kind, parent_ids)
            _record(archive, admission, next_record_id, t, kind, parent_ids, stamp())
            next_record_id += 1
            if admission.heuristic is not None:
                pop.members.append(admission.heuristic)
                admitted_count += 1
        if len(pop.members) > config.N:
            pop = _manage(pop, config)
        _snapshot(archive, t, pop)
        if progress is not None:
            progress(t, admitted_count, _front_size(pop), _live_front_hv(archive, pop))

    return pop, archive


def _front_size(pop: Population) -> int:
    if not pop.members:
        return 0
    return len(nondominated_filter(pop.objective_list()))


def _record(archive: RunArchive, admission: _Admission, record_id: int,
            generation: int, operator: Operator, parent_ids: tuple[int, ...],
            timestamp: float | None) -> None:
    heuristic = admission.heuristic
    archive.append(AttemptRecord(
        record_id=record_id,
        generation=generation,
        operator=operator.value,
        parent_ids=parent_ids,
        admitted=heuristic is not None,
        description=admission.description,
        source=admission.source,
        objectives=heuristic.objectives if heuristic else None,
        failure_category=admission.failure_category,
        eval_cost=heuristic.objectives[1] if heuristic else None,
        timestamp=timestamp,
    ))


def _snapshot(archive: RunArchive, generation: int, pop: Population) -> None:
    if pop.members:
        scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
        values = tuple(float(x) for x in scores.scores)
    else:
        values = ()
    archive.snapshot(GenerationSnapshot(
        generation=generation,
        member_ids=tuple(m.id for m in pop.members),
        dd_scores=values,
    ))


def _config_dict(config: RunConfig, env: ProblemEnvironment) -> dict:
    return {
        "N": config.N,
        "T": config.T,
        "d": config.d,
        "seed": config.seed,
        "management": config.management.value,
        "objective_mode": config.objective_mode.value,
        "problem": config.problem,
        "pool_grows_within_generation": config.pool_grows_within_generation,
        "init_attempt_factor": config.init_attempt_factor,
        "operator_cycle": [op.value for op in config.operator_cycle],
        "task": env.task.name,
    }

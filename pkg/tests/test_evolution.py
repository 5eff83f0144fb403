from __future__ import annotations

import math

import numpy as np
import pytest

from mohevo.dsl import parse
from mohevo.evolution import (
    Heuristic,
    InitializationExhausted,
    Management,
    Operator,
    Population,
    RunConfig,
    dd_scores,
    dominance_mask,
    manage_moead_like,
    manage_nsga2,
    manage_population,
    manage_single_objective,
    run_evolution,
    select_parents,
    uniform_weights,
)
from mohevo.operators import MockSource
from mohevo.problems.base import ObjectiveMode
from mohevo.problems.bpp import BppEnvironment, generate_weibull_instance
from mohevo.similarity import dissimilarity_matrix

from conftest import fixture_source
from oracles import (
    dd_scores_oracle,
    dominance_mask_oracle,
    manage_top_n_oracle,
    nsga2_oracle,
)
from populations import make_member, oracle_similarities, random_population, tree_pool


# --- dominance mask and scores -----------------------------------------------------

def test_dominance_mask_examples():
    t = tree_pool()
    incomparable = Population([make_member(0, (1, 3), t[0]),
                               make_member(1, (3, 1), t[1])], 2)
    assert np.array_equal(dominance_mask(incomparable), np.zeros((2, 2)))
    ordered = Population([make_member(0, (1, 1), t[0]),
                          make_member(1, (2, 2), t[1])], 2)
    mask = dominance_mask(ordered)
    assert mask[0, 1] == 1 and mask.sum() == 1


def test_dominance_mask_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pop = random_population(rng, 15)
        assert np.array_equal(dominance_mask(pop), dominance_mask_oracle(pop.objective_list()))


def test_dd_scores_nondominated_is_zero():
    rng = np.random.default_rng(1)
    pop = random_population(rng, 10)
    scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
    mask = dominance_mask(pop)
    for j in range(10):
        if mask[:, j].sum() == 0:
            assert scores.scores[j] == 0.0
        else:
            assert scores.scores[j] < 0.0
    assert abs(scores.probabilities.sum() - 1.0) < 1e-9
    assert np.all(scores.probabilities > 0)


def test_dd_score_of_dominated_identical_twin_is_minus_one():
    tree = parse(fixture_source("bpp_best_fit.dsl"))
    twin = parse(fixture_source("bpp_best_fit.dsl"))
    pop = Population([make_member(0, (1.0, 1.0), tree),
                      make_member(1, (2.0, 2.0), twin)], 2)
    scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
    assert scores.scores[0] == 0.0
    assert scores.scores[1] == -1.0


def test_dd_scores_match_masked_sum_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        pop = random_population(rng, 10)
        sims = oracle_similarities(pop.trees())
        v_oracle, pi_oracle = dd_scores_oracle(pop.objective_list(), sims)
        scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
        assert np.allclose(scores.scores, v_oracle, atol=1e-12)
        assert np.allclose(scores.probabilities, pi_oracle, atol=1e-12)


def test_dd_scores_invariant_under_monotone_axis_transform():
    rng = np.random.default_rng(3)
    for _ in range(25):
        pop = random_population(rng, 12)
        base = dd_scores(pop, dissimilarity_matrix(pop.trees()))
        cubed = Population([
            make_member(m.id, (m.objectives[0] ** 3, m.objectives[1]), m.tree)
            for m in pop.members], 12)
        transformed = dd_scores(cubed, dissimilarity_matrix(cubed.trees()))
        assert base.scores.tobytes() == transformed.scores.tobytes()


# --- parent selection ------------------------------------------------------------

def test_select_parents_uniform_when_scores_equal():
    tree_list = tree_pool()[:8]
    pop = Population([make_member(i, (float(i), float(8 - i)), tree_list[i])
                      for i in range(8)], 8)  # all mutually non-dominated
    scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
    assert np.all(scores.scores == 0.0)
    rng = np.random.default_rng(0)
    trials, d = 100_000, 2
    counts = np.zeros(8)
    for _ in range(trials):
        for member in select_parents(pop, scores, d, rng):
            counts[member.id] += 1
    p = d / 8
    sigma = math.sqrt(trials * p * (1 - p))
    assert np.all(np.abs(counts - trials * p) <= 3 * sigma)


def test_select_parents_extreme_score_dominates_draw():
    # one member at v=0, others at v=-10: softmax ratio e^10 per rival
    tree_list = tree_pool()[:5]
    members = [make_member(i, (1.0, 1.0), tree_list[i]) for i in range(5)]
    pop = Population(members, 5)
    probs = np.exp(np.array([0.0, -10.0, -10.0, -10.0, -10.0]))
    probs /= probs.sum()
    scores_obj = type("S", (), {"scores": None, "probabilities": probs})()
    rng = np.random.default_rng(5)
    hits = sum(select_parents(pop, scores_obj, 1, rng)[0].id == 0 for _ in range(2000))
    assert hits / 2000 >= 0.99


def test_select_parents_full_draw_returns_population():
    rng = np.random.default_rng(6)
    pop = random_population(rng, 6)
    scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
    drawn = select_parents(pop, scores, 6, rng)
    assert sorted(m.id for m in drawn) == sorted(m.id for m in pop.members)


def test_select_parents_deterministic_given_rng_state():
    pop = random_population(np.random.default_rng(7), 10)
    scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
    a = [m.id for m in select_parents(pop, scores, 4, np.random.default_rng(42))]
    b = [m.id for m in select_parents(pop, scores, 4, np.random.default_rng(42))]
    assert a == b


# --- population management ----------------------------------------------------------

def test_manage_population_identity_at_capacity():
    pop = random_population(np.random.default_rng(8), 8)
    managed = manage_population(pop, 8)
    assert sorted(m.id for m in managed.members) == sorted(m.id for m in pop.members)
    again = manage_population(managed, 8)
    assert [m.id for m in again.members] == [m.id for m in managed.members]


def test_manage_population_drops_dominated_twin():
    tree = parse(fixture_source("bpp_best_fit.dsl"))
    twin = parse(fixture_source("bpp_best_fit.dsl"))
    others = [make_member(i + 2, (float(i), float(5 - i)), tree_pool()[i + 5])
              for i in range(4)]
    pop = Population([make_member(0, (1.0, 1.0), tree),
                      make_member(1, (2.0, 2.0), twin)] + others, 5)
    managed = manage_population(pop, 5)
    assert 1 not in {m.id for m in managed.members}


def test_manage_population_matches_recompute_oracle():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n_keep = int(rng.integers(3, 8))
        pop = random_population(rng, 2 * n_keep, capacity=n_keep)
        sims = oracle_similarities(pop.trees())
        expected = manage_top_n_oracle(pop.objective_list(), sims,
                                       [m.id for m in pop.members], n_keep)
        managed = manage_population(pop, n_keep)
        assert [m.id for m in managed.members] == expected


def test_manage_population_keeps_all_nondominated_when_they_fit():
    rng = np.random.default_rng(10)
    for _ in range(30):
        pop = random_population(rng, 12)
        nd_ids = {pop.members[j].id for j in
                  [i for i in range(12)
                   if dominance_mask(pop)[:, i].sum() == 0]}
        if len(nd_ids) <= 6:
            kept = {m.id for m in manage_population(pop, 6).members}
            assert nd_ids <= kept


def test_manage_nsga2_examples():
    t = tree_pool()
    members = [make_member(i, o, t[i]) for i, o in
               enumerate([(1.0, 3.0), (2.0, 2.0), (3.0, 1.0), (2.1, 2.1)])]
    pop = Population(members, 3)
    kept = {m.id for m in manage_nsga2(pop, 3).members}
    assert kept == {0, 1, 2}
    flat = Population([make_member(i, o, t[i]) for i, o in
                       enumerate([(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)])], 3)
    assert {m.id for m in manage_nsga2(flat, 3).members} == {0, 1, 2}


def test_manage_nsga2_matches_textbook_oracle():
    rng = np.random.default_rng(11)
    for _ in range(40):
        n_keep = int(rng.integers(3, 8))
        pop = random_population(rng, 2 * n_keep, capacity=n_keep)
        kept = {m.id for m in manage_nsga2(pop, n_keep).members}
        expected_idx = nsga2_oracle(pop.objective_list(), n_keep)
        expected = {pop.members[i].id for i in expected_idx}
        assert kept == expected


def test_manage_moead_examples():
    t = tree_pool()
    single = Population([make_member(0, (3.0, 0.0), t[0]),
                         make_member(1, (1.0, 5.0), t[1]),
                         make_member(2, (2.0, 2.0), t[2])], 1)
    kept = manage_moead_like(single, 1, [(1.0, 0.0)])
    assert [m.id for m in kept.members] == [1]  # minimal first objective

    axes = Population([make_member(0, (0.0, 1.0), t[0]),
                       make_member(1, (1.0, 0.0), t[1]),
                       make_member(2, (0.6, 0.6), t[2])], 2)
    kept = manage_moead_like(axes, 2, [(1.0, 0.0), (0.0, 1.0)])
    assert {m.id for m in kept.members} == {0, 1}


def test_manage_moead_matches_exhaustive_assignment():
    rng = np.random.default_rng(12)
    for _ in range(20):
        n_keep = int(rng.integers(2, 8))
        pop = random_population(rng, n_keep + int(rng.integers(1, 6)), capacity=n_keep)
        weights = uniform_weights(n_keep)
        kept = [m.id for m in manage_moead_like(pop, n_keep, weights).members]

        # independent sequential assignment with explicit normalization
        objs = pop.objective_list()
        lo = [min(o[k] for o in objs) for k in range(2)]
        hi = [max(o[k] for o in objs) for k in range(2)]

        def norm(o):
            return tuple(0.0 if hi[k] - lo[k] < 1e-12 else (o[k] - lo[k]) / (hi[k] - lo[k])
                         for k in range(2))

        unassigned = list(range(len(objs)))
        expected = []
        for w in weights:
            best, best_key = None, None
            for i in unassigned:
                f = norm(objs[i])
                key = (max(w[0] * abs(f[0]), w[1] * abs(f[1])), i)
                if best_key is None or key < best_key:
                    best, best_key = i, key
            expected.append(pop.members[best].id)
            unassigned.remove(best)
        assert kept == expected


def test_manage_single_objective_keeps_best_quality():
    t = tree_pool()
    pop = Population([make_member(i, (float(5 - i), 1.0), t[i]) for i in range(5)], 3)
    kept = manage_single_objective(pop, 3)
    assert [m.id for m in kept.members] == [4, 3, 2]


def test_uniform_weights_shapes():
    assert uniform_weights(1) == [(1.0, 0.0)]
    weights = uniform_weights(5)
    assert len(weights) == 5
    assert weights[0] == (1.0, 0.0) and weights[-1] == (0.0, 1.0)
    assert all(abs(sum(w) - 1.0) < 1e-12 for w in weights)


# --- generational loop -----------------------------------------------------------------


class ScriptedSource:
    """Replays canned texts, cycling when exhausted."""

    def __init__(self, texts):
        self.texts = list(texts)
        self.calls = 0

    def generate(self, kind, parents, rng):
        text = self.texts[self.calls % len(self.texts)]
        self.calls += 1
        return text


def tiny_env():
    instances = [generate_weibull_instance(60, 100, seed=s) for s in (0, 1)]
    return BppEnvironment(instances)


def tiny_config(**overrides):
    base = dict(N=4, T=2, d=2, seed=123)
    base.update(overrides)
    return RunConfig(**base)


def wrap(description, code):
    return f"<start>{description}<end>\n```\n{code}\n```"


def test_run_evolution_deterministic_archives():
    from mohevo.archive import dump_archive
    from mohevo.problems.bpp import BPP_TASK

    def one_run():
        return run_evolution(tiny_config(), MockSource(BPP_TASK), tiny_env())

    pop1, archive1 = one_run()
    pop2, archive2 = one_run()
    assert dump_archive(archive1) == dump_archive(archive2)
    assert [m.id for m in pop1.members] == [m.id for m in pop2.members]


def test_run_evolution_initialization_exhausted():
    source = ScriptedSource(["no sentinels at all"])
    with pytest.raises(InitializationExhausted):
        run_evolution(tiny_config(), source, tiny_env())


def test_run_evolution_proceeds_with_partial_init():
    # two valid heuristics then junk: init ends below capacity but above the
    # 2-member floor, and the loop still runs
    source = ScriptedSource([
        wrap("tight", "fn score(item, bins) { return item - bins; }"),
        wrap("empty", "fn score(item, bins) { return bins; }"),
        "junk",
    ])
    config = tiny_config(N=4, T=1, init_attempt_factor=2)
    population, archive = run_evolution(config, source, tiny_env())
    assert len(population.members) >= 2
    init_records = [r for r in archive.records if r.generation == 0]
    assert sum(r.admitted for r in init_records) == 2


def test_run_evolution_archive_contents():
    from mohevo.problems.bpp import BPP_TASK
    config = tiny_config(T=3)
    population, archive = run_evolution(config, MockSource(BPP_TASK), tiny_env())
    ids = [r.record_id for r in archive.records]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)
    for record in archive.records:
        assert record.admitted == (record.failure_category is None)
        if record.admitted:
            assert record.objectives is not None
            assert all(np.isfinite(v) for v in record.objectives)
        assert record.timestamp is None  # stepcost mode is timestamp-free
    # snapshots: one per generation including generation zero
    assert [s.generation for s in archive.snapshots] == list(range(config.T + 1))
    final = archive.snapshots[-1]
    assert set(final.member_ids) == {m.id for m in population.members}
    assert all(v <= 0.0 for v in final.dd_scores)


def test_run_evolution_duplicate_offspring_rejected():
    # identical code every time: init admits one, everything after is duplicate
    source = ScriptedSource([
        wrap("tight", "fn score(item, bins) { return item - bins; }"),
        wrap("empty", "fn score(item, bins) { return bins; }"),
    ])
    config = tiny_config(N=2, T=1, d=1, init_attempt_factor=3)
    population, archive = run_evolution(config, source, tiny_env())
    dup = [r for r in archive.records if r.failure_category == "duplicate"]
    assert dup, "repeat offspring must be logged as duplicates"


def test_run_evolution_archive_front_hv_nondecreasing():
    from mohevo.problems.bpp import BPP_TASK
    from mohevo.runner.metrics import compute_metrics
    config = tiny_config(N=6, T=6, d=3, seed=9)
    _, archive = run_evolution(config, MockSource(BPP_TASK), tiny_env())
    series = compute_metrics(archive)
    for earlier, later in zip(series.archive_front_hv, series.archive_front_hv[1:]):
        assert later >= earlier - 1e-12


@pytest.mark.parametrize("management", [Management.NSGA2, Management.MOEAD,
                                        Management.SINGLE_OBJECTIVE])
def test_run_evolution_alternative_managers(management):
    from mohevo.problems.bpp import BPP_TASK
    config = tiny_config(T=2, management=management)
    population, archive = run_evolution(config, MockSource(BPP_TASK), tiny_env())
    assert len(population.members) <= config.N
    assert archive.config["management"] == management.value


def test_run_evolution_frozen_pool_flag():
    from mohevo.archive import dump_archive
    from mohevo.problems.bpp import BPP_TASK
    growing = run_evolution(tiny_config(T=2), MockSource(BPP_TASK), tiny_env())[1]
    frozen = run_evolution(tiny_config(T=2, pool_grows_within_generation=False),
                           MockSource(BPP_TASK), tiny_env())[1]
    assert growing.config["pool_grows_within_generation"] is True
    assert frozen.config["pool_grows_within_generation"] is False
    assert dump_archive(growing) != dump_archive(frozen)


def test_run_evolution_walltime_mode_records_timestamps():
    from mohevo.problems.bpp import BPP_TASK
    config = tiny_config(T=1, objective_mode=ObjectiveMode.WALLTIME)
    _, archive = run_evolution(config, MockSource(BPP_TASK), tiny_env())
    assert all(r.timestamp is not None for r in archive.records)


def test_run_evolution_through_endpoint_source(monkeypatch):
    """Full loop against a stub chat server that answers with mock texts:
    exercises render -> HTTP -> parse inside the generational loop."""
    import json
    import threading
    from http.server import BaseHTTPRequestHandler, HTTPServer

    from mohevo.archive import dump_archive
    from mohevo.operators import EndpointConfig, EndpointSource, MockGenerator
    from mohevo.problems.bpp import BPP_TASK

    gen = MockGenerator(BPP_TASK, malformed_rate=0.05)
    rng = np.random.default_rng(77)

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            prompt = body["messages"][0]["content"]
            # answer mutations with a template too; the loop only needs text
            kind = Operator.M2 if "parameter" in prompt else Operator.INIT
            text = gen.generate(rng, kind, [])
            self.send_response(200)
            self.end_headers()
            self.wfile.write(json.dumps(
                {"choices": [{"message": {"content": text}}]}).encode())

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        monkeypatch.setenv("MOHEVO_EVO_KEY", "k")
        host, port = server.server_address
        cfg = EndpointConfig(base_url=f"http://{host}:{port}", model_name="m",
                             api_key_env_name="MOHEVO_EVO_KEY", timeout=10.0,
                             max_retries=1, backoff_base=0.01)
        source = EndpointSource(cfg, BPP_TASK)
        population, archive = run_evolution(tiny_config(T=2), source, tiny_env())
        assert len(population.members) >= 2
        assert archive.admitted()
        dump_archive(archive)  # serializes cleanly
    finally:
        server.shutdown()
        thread.join(timeout=5)

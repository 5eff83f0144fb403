"""Acceptance suite: every criterion at its stated tolerance.

Each criterion prints one `[acceptance] ... PASS/FAIL` line (visible with
`pytest -s` or in the failure report). Stated runtime budgets are asserted.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from mohevo.archive import load_archive
from mohevo.dsl import parse, validate_signature
from mohevo.evolution import (
    dd_scores,
    dominance_mask,
    manage_nsga2,
    manage_population,
)
from mohevo.operators import (
    ChatClient,
    EndpointConfig,
    MalformedResponse,
    MockGenerator,
    Operator,
    llm_generate,
    parse_response,
    render_prompt,
)
from mohevo.pareto import hypervolume, igd, nondominated_filter
from mohevo.problems.bpp import (
    DEFAULT_EVAL_SEEDS,
    evaluate_bpp,
    generate_weibull_instance,
    lower_bound,
    simulate_online,
)
from mohevo.problems.base import ObjectiveMode
from mohevo.problems.tsp import (
    exact_solve_small,
    generate_uniform_instance,
    gls_solve,
    load_tsplib,
)
from mohevo.runner.cli import main as cli_main
from mohevo.similarity import ast_similarity, dissimilarity_matrix

from conftest import DATA, FIXTURES, GOLDENS, REPO_ROOT, fixture_source
from genprog import random_program
from oracles import (
    dd_scores_oracle,
    dominance_mask_oracle,
    hypervolume_monte_carlo,
    igd_double_loop,
    manage_top_n_oracle,
    nondominated_oracle,
    nsga2_oracle,
    similarity_oracle,
)
from populations import make_member, oracle_similarities, random_population, tree_pool

BPP_SMALL_CONFIG = REPO_ROOT / "configs" / "bpp_mock_small.toml"


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number} ({name}): FAIL", flush=True)
        raise
    print(f"[acceptance] criterion {number} ({name}): PASS", flush=True)


def test_criterion_1_dominance_and_scores_oracle_equivalence():
    with criterion(1, "dominance & filtering oracle equivalence"):
        started = time.perf_counter()
        rng = np.random.default_rng(1001)
        for _ in range(200):
            n = int(rng.integers(2, 21))
            m = int(rng.choice([2, 3]))
            pop = random_population(rng, n, m)
            vectors = pop.objective_list()

            assert nondominated_filter(vectors) == nondominated_oracle(vectors)
            assert np.array_equal(dominance_mask(pop), dominance_mask_oracle(vectors))

            scores = dd_scores(pop, dissimilarity_matrix(pop.trees()))
            v_oracle, pi_oracle = dd_scores_oracle(vectors, oracle_similarities(pop.trees()))
            assert scores.scores.tobytes() == v_oracle.tobytes()
            assert np.allclose(scores.probabilities, pi_oracle, atol=1e-12)
            assert abs(scores.probabilities.sum() - 1.0) <= 1e-9
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"took {elapsed:.2f}s, budget 5s"


def test_criterion_2_ast_similarity():
    with criterion(2, "AST similarity bounds and oracle equivalence"):
        started = time.perf_counter()
        programs = [parse(random_program(random.Random(seed))) for seed in range(100)]
        for tree in programs:
            assert ast_similarity(tree, tree) == 1.0
        rng = random.Random(7)
        for _ in range(300):
            a, b = rng.choice(programs), rng.choice(programs)
            assert 0.0 <= ast_similarity(a, b) <= 1.0
        shipped = [parse(fixture_source(name)) for name in
                   ("bpp_best_fit.dsl", "bpp_abs_sqrt.dsl", "bpp_worst_fit.dsl",
                    "tsp_identity.dsl", "tsp_gls_penalty.dsl")]
        small = [t for t in shipped if t.node_count() <= 30]
        small += [t for t in programs if t.node_count() <= 30][:15]
        small += [t for t in tree_pool() if t.node_count() <= 30][:10]
        for a in small:
            for b in small:
                assert ast_similarity(a, b) == similarity_oracle(a, b)
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"took {elapsed:.2f}s, budget 10s"


def test_criterion_3_hypervolume_and_igd_exactness():
    with criterion(3, "HV exactness and IGD oracle equivalence"):
        assert hypervolume([(0.5, 0.5)], (1.1, 1.1)) == pytest.approx(0.36, abs=1e-12)
        assert hypervolume([(0.0, 0.0)], (1.1, 1.1)) == pytest.approx(1.21, abs=1e-12)

        rng = np.random.default_rng(33)
        for trial in range(2):
            points = [tuple(v) for v in rng.random((8, 2))]
            exact = hypervolume(points, (1.1, 1.1))
            estimate = hypervolume_monte_carlo(points, (1.1, 1.1),
                                               n_samples=10_000_000, seed=trial)
            assert exact == pytest.approx(estimate, abs=1e-3)

        front = [tuple(v) for v in rng.random((12, 2))]
        assert igd(front, front) == 0.0
        for _ in range(20):
            approx = [tuple(v) for v in rng.random((int(rng.integers(1, 20)), 2))]
            ref = [tuple(v) for v in rng.random((int(rng.integers(1, 20)), 2))]
            assert igd(approx, ref) == pytest.approx(igd_double_loop(approx, ref), abs=1e-12)


def test_criterion_4_management_invariants():
    with criterion(4, "population management oracle equivalence"):
        rng = np.random.default_rng(44)
        for _ in range(500):
            n_keep = int(rng.integers(2, 7))
            size = n_keep + int(rng.integers(1, n_keep + 1))
            pop = random_population(rng, size, capacity=n_keep)

            managed = manage_population(pop, n_keep)
            expected = manage_top_n_oracle(pop.objective_list(),
                                           oracle_similarities(pop.trees()),
                                           [m.id for m in pop.members], n_keep)
            assert [m.id for m in managed.members] == expected

            nd_ids = {pop.members[j].id
                      for j in nondominated_filter(pop.objective_list())}
            if len(nd_ids) <= n_keep:
                assert nd_ids <= {m.id for m in managed.members}

            # idempotent at size N: the member set never changes, and once the
            # scores are recomputed on the kept set the order is a fixed point
            again = manage_population(managed, n_keep)
            assert {m.id for m in again.members} == {m.id for m in managed.members}
            third = manage_population(again, n_keep)
            assert [m.id for m in third.members] == [m.id for m in again.members]

            nsga_kept = {m.id for m in manage_nsga2(pop, n_keep).members}
            oracle_kept = {pop.members[i].id
                           for i in nsga2_oracle(pop.objective_list(), n_keep)}
            assert nsga_kept == oracle_kept


def test_criterion_5_monotone_transform_invariance():
    with criterion(5, "dd-score invariance under monotone axis transforms"):
        rng = np.random.default_rng(55)
        for _ in range(100):
            n = int(rng.integers(3, 15))
            pop = random_population(rng, n)
            base = dd_scores(pop, dissimilarity_matrix(pop.trees()))
            from mohevo.evolution import Population
            cubed = Population([
                make_member(m.id, (m.objectives[0] ** 3, m.objectives[1]), m.tree)
                for m in pop.members], n)
            transformed = dd_scores(cubed, dissimilarity_matrix(cubed.trees()))
            assert base.scores.tobytes() == transformed.scores.tobytes()


def test_criterion_6_bpp_simulator_oracle():
    with criterion(6, "bin-packing simulator vs independent best fit"):
        started = time.perf_counter()
        tree = parse(fixture_source("bpp_best_fit.dsl"))
        gaps = []
        for seed in DEFAULT_EVAL_SEEDS:
            inst = generate_weibull_instance(5000, 100, seed)
            bins_used, _ = simulate_online(inst, tree)

            open_bins: list[int] = []
            for item in inst.items:
                best_idx = -1
                for idx, remaining in enumerate(open_bins):
                    if remaining >= item and (best_idx == -1
                                              or remaining < open_bins[best_idx]):
                        best_idx = idx
                if best_idx == -1:
                    open_bins.append(inst.capacity - item)
                else:
                    open_bins[best_idx] -= item
            assert bins_used == len(open_bins)

            lb = lower_bound(inst)
            assert lb == math.ceil(sum(int(x) for x in inst.items) / inst.capacity)
            gaps.append((bins_used - lb) / lb)
        mean_gap = sum(gaps) / len(gaps)
        assert 0.0 <= mean_gap <= 0.05, mean_gap

        instances = [generate_weibull_instance(5000, 100, s) for s in DEFAULT_EVAL_SEEDS]
        reported_gap, cost = evaluate_bpp(tree, instances, ObjectiveMode.STEPCOST)
        assert reported_gap == pytest.approx(mean_gap, abs=1e-12)
        assert cost > 0
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"took {elapsed:.2f}s, budget 10s"


def test_criterion_7_tsp_gls_quality():
    with criterion(7, "GLS quality on berlin52 and exact small instances"):
        started = time.perf_counter()
        penalty = parse(fixture_source("tsp_gls_penalty.dsl"))

        berlin = load_tsplib(DATA / "berlin52.tsp")
        _, best_length, _ = gls_solve(berlin, penalty, max_iters=1000, time_budget=60.0)
        gap = (best_length - 7542.0) / 7542.0
        assert gap <= 0.02, f"berlin52 gap {gap:.4%}"

        matches = 0
        for seed in (401, 402, 403, 404):
            inst = generate_uniform_instance(10, seed=seed)
            _, optimum = exact_solve_small(inst)
            _, best, _ = gls_solve(inst, penalty, max_iters=200, time_budget=30.0)
            assert best >= optimum - 1e-9, "must never beat the exact optimum"
            if abs(best - optimum) <= 1e-9:
                matches += 1
        assert matches >= 3, f"only {matches}/4 matched the exact optimum"
        elapsed = time.perf_counter() - started
        assert elapsed < 90.0, f"took {elapsed:.2f}s, budget 90s"


def test_criterion_8_end_to_end_determinism(tmp_path):
    with criterion(8, "end-to-end mock run determinism and progress"):
        started = time.perf_counter()
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli_main(["run", "--config", str(BPP_SMALL_CONFIG),
                         "--out-dir", str(out_a)]) == 0
        assert cli_main(["run", "--config", str(BPP_SMALL_CONFIG),
                         "--out-dir", str(out_b)]) == 0
        archive_a = next(out_a.rglob("archive.jsonl"))
        archive_b = next(out_b.rglob("archive.jsonl"))
        assert archive_a.read_bytes() == archive_b.read_bytes()

        assert cli_main(["metrics", str(archive_a)]) == 0
        assert cli_main(["heatmap", str(archive_a)]) == 0
        metrics_text = (archive_a.parent / "metrics.csv").read_text()
        heatmap_text = (archive_a.parent / "heatmap.csv").read_text()
        assert metrics_text == (GOLDENS / "bpp_mock_metrics.csv").read_text()
        assert heatmap_text == (GOLDENS / "bpp_mock_heatmap.csv").read_text()

        hv_series = [float(line.split(",")[3])
                     for line in metrics_text.strip().splitlines()[1:]]
        assert all(b >= a - 1e-12 for a, b in zip(hv_series, hv_series[1:]))

        archive = load_archive(archive_a)
        by_id = {r.record_id: r.objectives for r in archive.admitted()}
        final = max(archive.snapshots, key=lambda s: s.generation)
        final_objs = [by_id[i] for i in final.member_ids]
        front_vectors = {final_objs[i] for i in nondominated_filter(final_objs)}
        assert len(front_vectors) >= 2
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"took {elapsed:.2f}s, budget 60s"


class _StubHandler(BaseHTTPRequestHandler):
    script: list = []

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        status, payload = self.script.pop(0) if self.script else (200, "{}")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload.encode())

    def log_message(self, *args):
        pass


def test_criterion_9_prompt_protocol(monkeypatch):
    with criterion(9, "prompt protocol round-trip and endpoint transcripts"):
        from mohevo.problems.bpp import BPP_TASK
        from mohevo.problems.tsp import TSP_TASK

        # operator renders carry their guidance anchors
        parents5 = _fixture_parents(5)
        parent1 = parents5[:1]
        renders = {
            Operator.E1: render_prompt(Operator.E1, BPP_TASK.description,
                                       BPP_TASK.requirements, parents5),
            Operator.E2: render_prompt(Operator.E2, BPP_TASK.description,
                                       BPP_TASK.requirements, parents5),
            Operator.M1: render_prompt(Operator.M1, BPP_TASK.description,
                                       BPP_TASK.requirements, parent1),
            Operator.M2: render_prompt(Operator.M2, BPP_TASK.description,
                                       BPP_TASK.requirements, parent1),
            Operator.M3: render_prompt(Operator.M3, BPP_TASK.description,
                                       BPP_TASK.requirements, parent1),
        }
        assert "totally different form" in renders[Operator.E1]
        assert "common idea" in renders[Operator.E2]
        assert "a modified version" in renders[Operator.M1]
        assert "identify the main algorithm parameters" in renders[Operator.M2]
        assert "simplify the components" in renders[Operator.M3]
        for text in renders.values():
            assert "must start with" in text

        # 10^3 seeded well-formed mock emissions round-trip through the parser
        for task in (BPP_TASK, TSP_TASK):
            gen = MockGenerator(task, malformed_rate=0.0)
            rng = np.random.default_rng(909)
            kinds = [Operator.INIT, Operator.E1, Operator.E2,
                     Operator.M1, Operator.M2, Operator.M3]
            parents = _fixture_parents(5, task.name)
            for i in range(500):
                kind = kinds[i % len(kinds)]
                used = parents[:1] if kind in (Operator.M1, Operator.M2, Operator.M3) \
                    else (parents if kind in (Operator.E1, Operator.E2) else [])
                response = parse_response(gen.generate(rng, kind, used))
                tree = parse(response.code)
                validate_signature(tree, task.signature)

        # endpoint client transcript: echo, retry-then-success, malformed body
        server = HTTPServer(("127.0.0.1", 0), _StubHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            monkeypatch.setenv("MOHEVO_ACCEPT_KEY", "k")
            host, port = server.server_address
            cfg = EndpointConfig(base_url=f"http://{host}:{port}",
                                 model_name="m", api_key_env_name="MOHEVO_ACCEPT_KEY",
                                 timeout=5.0, max_retries=2, backoff_base=0.01)
            _StubHandler.script = [
                (200, json.dumps({"choices": [{"message": {"content": "ECHO"}}]}))]
            assert llm_generate(cfg, "p") == "ECHO"

            _StubHandler.script = [
                (500, "x"), (500, "x"),
                (200, json.dumps({"choices": [{"message": {"content": "ok"}}]}))]
            client = ChatClient(cfg)
            assert client.generate("p") == "ok"
            assert client.last_retry_count == 2

            _StubHandler.script = [(200, "definitely not json")]
            with pytest.raises(MalformedResponse):
                llm_generate(cfg, "p")
        finally:
            server.shutdown()
            thread.join(timeout=5)


def _fixture_parents(n, task="bpp"):
    name = "bpp_best_fit.dsl" if task == "bpp" else "tsp_gls_penalty.dsl"
    tree = parse((FIXTURES / name).read_text())
    return [make_member(i, (0.1 * (i + 1), 1.0 * (n - i)), tree) for i in range(n)]

"""TOML run configuration: sections [run], [problem], [llm], [dsl_limits]."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..dsl import ExecLimits
from ..evolution import OPERATOR_CYCLE, Management, RunConfig
from ..operators import (
    DEFAULT_MALFORMED_RATE,
    EndpointConfig,
    EndpointSource,
    MockSource,
    Operator,
)
from ..problems.base import ObjectiveMode
from ..problems.bpp import (
    DEFAULT_EVAL_SEEDS,
    UNTOUCHED_SELECTABLE,
    BppEnvironment,
    generate_weibull_instance,
)
from ..problems.tsp import (
    HELD_KARP_MAX_NODES,
    TspEnvironment,
    exact_references,
    generate_uniform_instance,
    load_reference_lengths,
    load_tsplib,
    local_search_references,
)


class ConfigError(ValueError):
    pass


@dataclass
class LoadedRun:
    run_config: RunConfig
    environment: object
    generator_mode: str          # "mock" or "endpoint"
    mock_malformed_rate: float
    endpoint: EndpointConfig | None

    def make_source(self):
        if self.generator_mode == "mock":
            return MockSource(self.environment.task, self.mock_malformed_rate)
        if self.endpoint is None:
            raise ConfigError("endpoint mode needs an [llm] section with base_url")
        return EndpointSource(self.endpoint, self.environment.task)


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _take(table: dict, key: str, kind, default):
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value = table.pop(key)
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"key {key!r} must be {kind.__name__}, got {type(value).__name__}")
    return value


_REQUIRED = object()


def load_run(path: Path, seed: int | None = None, mode: str | None = None,
             objective: str | None = None) -> LoadedRun:
    """Parse and validate a run config; CLI overrides win over file values."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    run = _section(data, "run")
    problem = _section(data, "problem")
    llm = _section(data, "llm")
    limits_table = _section(data, "dsl_limits")

    limits = ExecLimits(
        max_steps=_take(limits_table, "max_steps", int, 2_000_000),
        max_loop_total=_take(limits_table, "max_loop_total", int, 1_000_000),
    )

    task = _take(problem, "task", str, _REQUIRED)
    objective_name = objective or _take(run, "objective", str, "stepcost")
    try:
        objective_mode = ObjectiveMode(objective_name.lower())
    except ValueError:
        raise ConfigError(f"unknown objective mode {objective_name!r}") from None
    management_name = _take(run, "management", str, "dominance_dissimilarity")
    try:
        management = Management(management_name.lower())
    except ValueError:
        raise ConfigError(f"unknown management strategy {management_name!r}") from None

    operator_names = run.pop("operators", None)
    if operator_names is None:
        operator_cycle = OPERATOR_CYCLE
    else:
        try:
            operator_cycle = tuple(Operator(name) for name in operator_names)
        except ValueError as exc:
            raise ConfigError(f"unknown operator in 'operators': {exc}") from exc

    try:
        run_config = RunConfig(
            N=_take(run, "N", int, _REQUIRED),
            T=_take(run, "T", int, _REQUIRED),
            d=_take(run, "d", int, 5),
            seed=seed if seed is not None else _take(run, "seed", int, 0),
            management=management,
            objective_mode=objective_mode,
            problem=task,
            run_id=_take(run, "run_id", str, "") or None,
            pool_grows_within_generation=_take(run, "pool_grows_within_generation", bool, True),
            init_attempt_factor=_take(run, "init_attempt_factor", int, 5),
            operator_cycle=operator_cycle,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    generator_mode = (mode or _take(run, "mode", str, "mock")).lower()
    if generator_mode not in ("mock", "endpoint"):
        raise ConfigError(f"unknown generator mode {generator_mode!r}")

    environment = _build_environment(task, problem, limits, base_dir=path.parent)

    endpoint = None
    if "base_url" in llm:
        endpoint = EndpointConfig(
            base_url=_take(llm, "base_url", str, _REQUIRED),
            model_name=_take(llm, "model_name", str, "gpt-3.5-turbo"),
            api_key_env_name=_take(llm, "api_key_env_name", str, "MOHEVO_API_KEY"),
            temperature=_take(llm, "temperature", float, 1.0),
            timeout=_take(llm, "timeout", float, 60.0),
            max_retries=_take(llm, "max_retries", int, 3),
        )
    malformed_rate = _take(llm, "mock_malformed_rate", float, DEFAULT_MALFORMED_RATE)

    return LoadedRun(run_config, environment, generator_mode, malformed_rate, endpoint)


def _build_environment(task: str, problem: dict, limits: ExecLimits, base_dir: Path):
    if task == "bpp":
        seeds = problem.pop("seeds", list(DEFAULT_EVAL_SEEDS))
        n_items = _take(problem, "n_items", int, 5000)
        capacity = _take(problem, "capacity", int, 100)
        untouched = _take(problem, "untouched_rule", str, UNTOUCHED_SELECTABLE)
        instances = [generate_weibull_instance(n_items, capacity, s) for s in seeds]
        return BppEnvironment(instances, limits, untouched)
    if task == "tsp":
        tsplib_files = problem.pop("tsplib_files", [])
        seeds = problem.pop("seeds", [])
        n_nodes = _take(problem, "n_nodes", int, 100)
        max_iters = _take(problem, "gls_max_iters", int, 1000)
        time_budget = _take(problem, "gls_time_budget", float, 60.0)
        references = _take(problem, "references", str, "local_search")
        instances = [load_tsplib(base_dir / f) for f in tsplib_files]
        instances.extend(generate_uniform_instance(n_nodes, s) for s in seeds)
        if not instances:
            raise ConfigError("tsp needs tsplib_files and/or seeds")
        if references == "exact":
            if any(inst.n > HELD_KARP_MAX_NODES for inst in instances):
                raise ConfigError(
                    f"exact references need instances of <= {HELD_KARP_MAX_NODES} nodes")
            refs = exact_references(instances)
        elif references == "local_search":
            refs = local_search_references(instances)
        else:
            table = load_reference_lengths(base_dir / references)
            try:
                refs = [table[inst.name] for inst in instances]
            except KeyError as exc:
                raise ConfigError(f"reference file lacks an entry for {exc}") from exc
        return TspEnvironment(instances, refs, max_iters, time_budget, limits)
    raise ConfigError(f"unknown task {task!r}")

"""Command-line shell: run, eval, metrics, export-front, heatmap."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..archive import CorruptArchive, load_archive, write_archive
from ..dsl import DslError, parse, validate_signature
from ..evolution import InitializationExhausted, run_evolution
from ..problems.base import HeuristicFailure, ObjectiveMode
from ..problems.bpp import BppEnvironment, instance_report
from ..problems.tsp import TspEnvironment, gls_solve
from .config import ConfigError, load_run
from .metrics import (
    compute_metrics,
    export_front_csv,
    heatmap_csv,
    metrics_csv,
    write_text,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INIT_EXHAUSTED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mohevo",
        description="Multi-objective evolution of interpreted optimization heuristics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an evolution run")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--mode", choices=["endpoint", "mock"], default=None)
    run.add_argument("--objective", choices=["walltime", "stepcost"], default=None)
    run.add_argument("--out-dir", type=Path, default=Path("runs"))

    ev = sub.add_parser("eval", help="evaluate one heuristic file on a problem preset")
    ev.add_argument("heuristic", type=Path)
    ev.add_argument("--config", required=True, type=Path)
    ev.add_argument("--objective", choices=["walltime", "stepcost"], default=None)

    for name, help_text in [
        ("metrics", "per-generation HV/IGD/dd-score series as CSV"),
        ("export-front", "final population's non-dominated members as CSV"),
        ("heatmap", "generations x slots dd-score grid as CSV"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("archive", type=Path)
        cmd.add_argument("--out-dir", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_export(args)
    except (ConfigError, CorruptArchive) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_run(args) -> int:
    loaded = load_run(args.config, seed=args.seed, mode=args.mode,
                      objective=args.objective)
    source = loaded.make_source()

    def progress(generation, admitted, front_size, hv):
        print(f"gen {generation}: admitted {admitted}, front {front_size}, "
              f"hv {hv:.4f}", flush=True)

    try:
        population, archive = run_evolution(loaded.run_config, source,
                                            loaded.environment, progress=progress)
    except InitializationExhausted as exc:
        print(f"initialization exhausted: {exc}", file=sys.stderr)
        return EXIT_INIT_EXHAUSTED
    out_path = args.out_dir / archive.run_id / "archive.jsonl"
    write_archive(archive, out_path)
    print(f"archive written to {out_path}")
    print(f"final population: {len(population.members)} members")
    return EXIT_OK


def _cmd_eval(args) -> int:
    loaded = load_run(args.config, objective=args.objective)
    env = loaded.environment
    try:
        source_text = args.heuristic.read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        tree = parse(source_text)
        validate_signature(tree, env.task.signature)
    except DslError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    mode = loaded.run_config.objective_mode
    try:
        if isinstance(env, BppEnvironment):
            gap, cost = _eval_bpp(env, tree)
        else:
            gap, cost = _eval_tsp(env, tree)
        if mode is not ObjectiveMode.STEPCOST:
            # wall-clock cost follows the median-of-repeats protocol
            gap, cost = env.evaluate(tree, mode)
    except HeuristicFailure as exc:
        print(f"heuristic failed ({exc.category}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"aggregate: gap {gap:.6f}, cost {cost:.6g} ({mode.value})")
    return EXIT_OK


def _eval_bpp(env: BppEnvironment, tree) -> tuple[float, float]:
    gaps, steps_total = [], 0.0
    for idx, inst in enumerate(env.instances):
        report = instance_report(inst, tree, env.limits, env.untouched_rule)
        print(f"instance {idx}: bins {report.bins_used}, lower bound "
              f"{report.lower_bound}, gap {report.gap:.6f}, steps {report.cost:.0f}")
        gaps.append(report.gap)
        steps_total += report.cost
    return sum(gaps) / len(gaps), steps_total


def _eval_tsp(env: TspEnvironment, tree) -> tuple[float, float]:
    gaps, steps_total = [], 0.0
    for idx, (inst, ref) in enumerate(zip(env.instances, env.reference_lengths)):
        _, best_length, steps = gls_solve(inst, tree, env.max_iters,
                                          env.time_budget, env.limits)
        gap = (best_length - ref) / ref
        print(f"instance {idx} ({inst.name}): length {best_length:.4f}, "
              f"reference {ref:.4f}, gap {gap:.6f}, steps {steps}")
        gaps.append(gap)
        steps_total += steps
    return sum(gaps) / len(gaps), steps_total


def _cmd_export(args) -> int:
    archive = load_archive(args.archive)
    out_dir = args.out_dir if args.out_dir is not None else args.archive.parent
    if args.command == "metrics":
        text = metrics_csv(compute_metrics(archive))
        out_path = out_dir / "metrics.csv"
    elif args.command == "export-front":
        text = export_front_csv(archive)
        out_path = out_dir / "front.csv"
    else:
        text = heatmap_csv(archive)
        out_path = out_dir / "heatmap.csv"
    write_text(text, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Run the two offline demo presets and print the trade-off fronts they find.

Everything is deterministic: the mock generator, the instances, and the
step-count cost objective are all derived from the seeds in the configs.
Archives and CSV reports land under runs/.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from mohevo.archive import load_archive, write_archive
from mohevo.evolution import run_evolution
from mohevo.pareto import nondominated_filter
from mohevo.runner.config import load_run
from mohevo.runner.metrics import compute_metrics, heatmap_csv, metrics_csv, write_text


def run_preset(config_path: Path, out_dir: Path) -> None:
    print(f"=== {config_path.name} ===")
    loaded = load_run(config_path)

    def progress(gen, admitted, front, hv):
        print(f"  gen {gen}: admitted {admitted}, front {front}, hv {hv:.4f}")

    population, archive = run_evolution(loaded.run_config, loaded.make_source(),
                                        loaded.environment, progress=progress)
    run_dir = out_dir / archive.run_id
    write_archive(archive, run_dir / "archive.jsonl")
    series = compute_metrics(load_archive(run_dir / "archive.jsonl"))
    write_text(metrics_csv(series), run_dir / "metrics.csv")
    write_text(heatmap_csv(archive), run_dir / "heatmap.csv")

    objs = [m.objectives for m in population.members]
    front = sorted({objs[i] for i in nondominated_filter(objs)})
    print(f"  final front ({len(front)} distinct trade-offs):")
    for gap, cost in front:
        print(f"    gap {gap:.4f}  cost {cost:.6g}")
    print(f"  outputs in {run_dir}\n")


def main() -> None:
    out_dir = REPO / "runs"
    run_preset(REPO / "configs" / "bpp_mock_small.toml", out_dir)
    run_preset(REPO / "configs" / "tsp_mock_small.toml", out_dir)


if __name__ == "__main__":
    main()

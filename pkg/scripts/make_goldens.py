#!/usr/bin/env python3
"""Regenerate the golden fixtures for the deterministic mock run.

Runs the bpp_mock_small preset end to end and freezes the metrics and heatmap
CSVs under tests/goldens/. Rerun after any intentional change to the mock
generator, evolution loop, scoring, or export formats, and review the diff.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from mohevo.evolution import run_evolution
from mohevo.runner.config import load_run
from mohevo.runner.metrics import compute_metrics, heatmap_csv, metrics_csv


def main() -> None:
    loaded = load_run(REPO / "configs" / "bpp_mock_small.toml")
    _, archive = run_evolution(loaded.run_config, loaded.make_source(),
                               loaded.environment)
    goldens = REPO / "tests" / "goldens"
    goldens.mkdir(parents=True, exist_ok=True)
    (goldens / "bpp_mock_metrics.csv").write_text(metrics_csv(compute_metrics(archive)))
    (goldens / "bpp_mock_heatmap.csv").write_text(heatmap_csv(archive))
    print(f"wrote goldens for run {archive.run_id} "
          f"({len(archive.records)} records, {len(archive.snapshots)} snapshots)")


if __name__ == "__main__":
    main()

"""Operational shell: configuration, persistence, metrics export, CLI."""

from .config import ConfigError, LoadedRun, load_run
from .metrics import (
    MetricsSeries,
    compute_metrics,
    export_front_csv,
    heatmap_csv,
    metrics_csv,
)

__all__ = [
    "ConfigError",
    "LoadedRun",
    "MetricsSeries",
    "compute_metrics",
    "export_front_csv",
    "heatmap_csv",
    "load_run",
    "metrics_csv",
]

"""mohevo: multi-objective evolution of interpreted optimization heuristics."""

__version__ = "0.1.0"

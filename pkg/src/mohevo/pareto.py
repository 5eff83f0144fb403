"""Objective vectors, dominance relations, and front quality indicators.

All objectives are minimized. Objective vectors are plain tuples of finite
floats; M is 2 in the shipped experiments (mean optimality gap, running cost)
but the dominance machinery accepts any M >= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Objectives = tuple  # tuple[float, ...]

DEFAULT_REFERENCE = (1.1, 1.1)
DEGENERATE_AXIS_EPS = 1e-12


class DimensionMismatch(ValueError):
    pass


class EmptySet(ValueError):
    pass


def dominates(a: Objectives, b: Objectives) -> bool:
    """True iff `a` is no worse than `b` in every objective and strictly better
    in at least one."""
    if len(a) != len(b):
        raise DimensionMismatch(f"objective dimensions differ: {len(a)} vs {len(b)}")
    strictly_better = False
    for ai, bi in zip(a, b):
        if ai > bi:
            return False
        if ai < bi:
            strictly_better = True
    return strictly_better


def nondominated_filter(vectors: list) -> list[int]:
    """Indices of the members not dominated by any other member. Duplicate
    vectors are all retained (an equal vector never dominates its twin)."""
    if not vectors:
        raise EmptySet("nondominated_filter needs at least one vector")
    keep: list[int] = []
    for j, vj in enumerate(vectors):
        if not any(i != j and dominates(vi, vj) for i, vi in enumerate(vectors)):
            keep.append(j)
    return keep


@dataclass(frozen=True)
class Bounds:
    """Componentwise ideal (min) and nadir (max) points of a reference union."""
    ideal: tuple
    nadir: tuple

    def __post_init__(self):
        if len(self.ideal) != len(self.nadir):
            raise DimensionMismatch("ideal and nadir dimensions differ")
        for lo, hi in zip(self.ideal, self.nadir):
            if lo > hi:
                raise ValueError("ideal must not exceed nadir componentwise")

    @classmethod
    def from_points(cls, points: list) -> "Bounds":
        if not points:
            raise EmptySet("bounds need at least one point")
        arr = np.asarray(points, dtype=np.float64)
        return cls(tuple(arr.min(axis=0).tolist()), tuple(arr.max(axis=0).tolist()))


def normalize(f: Objectives, bounds: Bounds) -> tuple:
    """Affine map of each component to [0, 1] over the bounds; a degenerate
    axis (nadir - ideal below epsilon) maps to 0."""
    if len(f) != len(bounds.ideal):
        raise DimensionMismatch("objective and bounds dimensions differ")
    out = []
    for v, lo, hi in zip(f, bounds.ideal, bounds.nadir):
        span = hi - lo
        out.append(0.0 if span < DEGENERATE_AXIS_EPS else (v - lo) / span)
    return tuple(out)


def hypervolume(points: list, ref: Objectives = DEFAULT_REFERENCE) -> float:
    """Exact bi-objective hypervolume: the area dominated by the points up to
    the reference point. Points at or beyond the reference contribute nothing.

    Computed with a sweep over the non-dominated subset sorted by the first
    objective; the result is independent of input order.
    """
    if len(ref) != 2:
        raise DimensionMismatch("hypervolume supports exactly 2 objectives")
    for p in points:
        if len(p) != 2:
            raise DimensionMismatch("hypervolume supports exactly 2 objectives")
    inside = [p for p in points if p[0] < ref[0] and p[1] < ref[1]]
    if not inside:
        return 0.0
    front = sorted({tuple(inside[i]) for i in nondominated_filter(inside)})
    area = 0.0
    for k, (x, y) in enumerate(front):
        next_x = front[k + 1][0] if k + 1 < len(front) else ref[0]
        area += (next_x - x) * (ref[1] - y)
    return area


def igd(approx: list, reference_set: list) -> float:
    """Mean Euclidean distance from each reference point to its nearest
    approximation point."""
    if not approx or not reference_set:
        raise EmptySet("igd needs non-empty approximation and reference sets")
    a = np.asarray(approx, dtype=np.float64)
    r = np.asarray(reference_set, dtype=np.float64)
    if a.shape[1] != r.shape[1]:
        raise DimensionMismatch("objective dimensions differ")
    # pairwise distances r x a via broadcasting
    d = np.sqrt(((r[:, None, :] - a[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).mean())

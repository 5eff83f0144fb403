"""Per-generation metrics and report exports recomputed from an archive.

Normalization bounds come from the union of every admitted heuristic in the
archive, the IGD reference set is the non-dominated subset of that union, and
HV uses the (1.1, 1.1) reference point in normalized space. With bounds fixed
this way, the archive-front HV series is non-decreasing. Distances for IGD are
measured in the same normalized space so both objectives carry equal weight.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from ..archive import CorruptArchive, RunArchive
from ..pareto import Bounds, hypervolume, igd, nondominated_filter, normalize


@dataclass(frozen=True)
class MetricsSeries:
    generations: tuple[int, ...]
    population_hv: tuple[float, ...]
    population_igd: tuple[float, ...]
    archive_front_hv: tuple[float, ...]
    mean_dd_score: tuple[float, ...]


def compute_metrics(archive: RunArchive) -> MetricsSeries:
    admitted = archive.admitted()
    if not admitted:
        raise CorruptArchive("archive has no admitted heuristics")
    if not archive.snapshots:
        raise CorruptArchive("archive has no generation snapshots")
    by_id = {r.record_id: r.objectives for r in admitted}
    union = [r.objectives for r in admitted]
    bounds = Bounds.from_points(union)
    reference_norm = [normalize(union[i], bounds) for i in nondominated_filter(union)]

    generations, pop_hv, pop_igd, arc_hv, mean_dd = [], [], [], [], []
    for snap in sorted(archive.snapshots, key=lambda s: s.generation):
        objs = [by_id[i] for i in snap.member_ids if i in by_id]
        if len(objs) != len(snap.member_ids):
            raise CorruptArchive(
                f"snapshot {snap.generation} references unknown heuristic ids")
        front_norm = [normalize(objs[i], bounds) for i in nondominated_filter(objs)]
        to_date = [r.objectives for r in archive.admitted_up_to(snap.generation)]
        to_date_front = [normalize(to_date[i], bounds) for i in nondominated_filter(to_date)]
        generations.append(snap.generation)
        pop_hv.append(hypervolume(front_norm))
        pop_igd.append(igd(front_norm, reference_norm))
        arc_hv.append(hypervolume(to_date_front))
        mean_dd.append(sum(snap.dd_scores) / len(snap.dd_scores) if snap.dd_scores else 0.0)
    return MetricsSeries(tuple(generations), tuple(pop_hv), tuple(pop_igd),
                         tuple(arc_hv), tuple(mean_dd))


def metrics_csv(series: MetricsSeries) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["generation", "population_hv", "population_igd",
                     "archive_front_hv", "mean_dd_score"])
    for row in zip(series.generations, series.population_hv, series.population_igd,
                   series.archive_front_hv, series.mean_dd_score):
        writer.writerow([row[0]] + [repr(v) for v in row[1:]])
    return out.getvalue()


def heatmap_csv(archive: RunArchive) -> str:
    """Generations x population-slot grid of dominance-dissimilarity scores;
    unfilled slots stay blank."""
    if not archive.snapshots:
        raise CorruptArchive("archive has no generation snapshots")
    n_slots = int(archive.config.get("N", max(len(s.member_ids)
                                              for s in archive.snapshots)))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["generation"] + [f"slot_{i}" for i in range(n_slots)])
    for snap in sorted(archive.snapshots, key=lambda s: s.generation):
        cells = [repr(v) for v in snap.dd_scores[:n_slots]]
        cells.extend([""] * (n_slots - len(cells)))
        writer.writerow([snap.generation] + cells)
    return out.getvalue()


def export_front_csv(archive: RunArchive) -> str:
    """The final population's non-dominated members with their code."""
    admitted = {r.record_id: r for r in archive.admitted()}
    if not admitted:
        raise CorruptArchive("archive has no admitted heuristics")
    if not archive.snapshots:
        raise CorruptArchive("archive has no generation snapshots")
    final = max(archive.snapshots, key=lambda s: s.generation)
    members = [admitted[i] for i in final.member_ids if i in admitted]
    if len(members) != len(final.member_ids):
        raise CorruptArchive("final snapshot references unknown heuristic ids")
    keep = nondominated_filter([m.objectives for m in members]) if members else []
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "objective_gap", "objective_cost", "description", "source"])
    for i in keep:
        record = members[i]
        writer.writerow([record.record_id, repr(record.objectives[0]),
                         repr(record.objectives[1]), record.description, record.source])
    return out.getvalue()


def write_text(text: str, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)

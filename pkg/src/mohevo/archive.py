"""Append-only run archive: every generation attempt plus per-generation
population snapshots.

Persisted as line-delimited JSON with a leading header object, so archives
stream, diff cleanly, and survive interruption; file writes go through a
temp-file-then-rename so a killed run leaves either the previous or the new
complete file.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

FORMAT_TAG = "mohevo-archive-v1"


class CorruptArchive(ValueError):
    pass


@dataclass(frozen=True)
class AttemptRecord:
    record_id: int
    generation: int
    operator: str
    parent_ids: tuple[int, ...]
    admitted: bool
    description: str
    source: str
    objectives: tuple[float, float] | None
    failure_category: str | None
    eval_cost: float | None
    timestamp: float | None

    def __post_init__(self):
        if self.admitted == (self.failure_category is not None):
            raise ValueError("a record is either admitted or failed with a category")
        if self.admitted and self.objectives is None:
            raise ValueError("admitted records carry objectives")


@dataclass(frozen=True)
class GenerationSnapshot:
    generation: int
    member_ids: tuple[int, ...]
    dd_scores: tuple[float, ...]


@dataclass
class RunArchive:
    run_id: str
    config: dict
    records: list[AttemptRecord] = field(default_factory=list)
    snapshots: list[GenerationSnapshot] = field(default_factory=list)

    def append(self, record: AttemptRecord) -> None:
        if self.records and record.record_id <= self.records[-1].record_id:
            raise ValueError("record ids must be strictly increasing")
        self.records.append(record)

    def snapshot(self, snap: GenerationSnapshot) -> None:
        self.snapshots.append(snap)

    def admitted(self) -> list[AttemptRecord]:
        return [r for r in self.records if r.admitted]

    def admitted_up_to(self, generation: int) -> list[AttemptRecord]:
        return [r for r in self.records if r.admitted and r.generation <= generation]

    def generations(self) -> list[int]:
        return sorted({s.generation for s in self.snapshots})


def _record_to_json(record: AttemptRecord) -> str:
    payload = asdict(record)
    payload["type"] = "attempt"
    payload["parent_ids"] = list(record.parent_ids)
    payload["objectives"] = list(record.objectives) if record.objectives else None
    return json.dumps(payload, sort_keys=True)


def _snapshot_to_json(snap: GenerationSnapshot) -> str:
    return json.dumps({
        "type": "snapshot",
        "generation": snap.generation,
        "member_ids": list(snap.member_ids),
        "dd_scores": list(snap.dd_scores),
    }, sort_keys=True)


def dump_archive(archive: RunArchive) -> str:
    lines = [json.dumps({"format": FORMAT_TAG, "run_id": archive.run_id,
                         "config": archive.config}, sort_keys=True)]
    lines.extend(_record_to_json(r) for r in archive.records)
    lines.extend(_snapshot_to_json(s) for s in archive.snapshots)
    return "\n".join(lines) + "\n"


def write_archive(archive: RunArchive, path: Path) -> None:
    """Atomic write: the target either keeps its old content or gets the new
    complete file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(dump_archive(archive))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_archive(path: Path) -> RunArchive:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CorruptArchive(f"cannot read archive {path}: {exc}") from exc
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise CorruptArchive(f"archive {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptArchive(f"archive {path} header is not JSON") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
        raise CorruptArchive(f"archive {path} has no {FORMAT_TAG} header")
    archive = RunArchive(run_id=header.get("run_id", ""), config=header.get("config", {}))
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptArchive(f"{path}:{lineno}: not JSON") from exc
        kind = payload.get("type")
        try:
            if kind == "attempt":
                payload.pop("type")
                payload["parent_ids"] = tuple(payload["parent_ids"])
                if payload["objectives"] is not None:
                    payload["objectives"] = tuple(payload["objectives"])
                archive.append(AttemptRecord(**payload))
            elif kind == "snapshot":
                archive.snapshot(GenerationSnapshot(
                    generation=payload["generation"],
                    member_ids=tuple(payload["member_ids"]),
                    dd_scores=tuple(payload["dd_scores"]),
                ))
            else:
                raise CorruptArchive(f"{path}:{lineno}: unknown record type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CorruptArchive):
                raise
            raise CorruptArchive(f"{path}:{lineno}: bad record: {exc}") from exc
    return archive

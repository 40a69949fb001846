"""File-backed population of kernel variants with lineage and benchmark results.

Layout under the population root::

    index                  one line per record: id base ref status created_seq
    <id>/source.kernel     kernel source text
    <id>/meta              key-value document (lineage, experiment, report)
    <id>/benchmark         key-value document, present once benchmarked
    <id>/transcripts/      stage transcripts attributed to this record

The index is the commit point: a record directory without an index line is
ignored on load.
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

from .documents import dump_document, load_document, write_atomic
from .errors import (
    EmptyPopulationError,
    NoEvaluatedRecordsError,
    StorageError,
    UnknownIdError,
    UnknownParentError,
)
from .models import BenchmarkReport, BenchmarkShape, ExperimentPlan, KernelRecord, Status

logger = logging.getLogger(__name__)

ID_WIDTH = 5
_NONE = "-"


def format_id(seq: int) -> str:
    return f"{seq:0{ID_WIDTH}d}"


@dataclass(frozen=True)
class SummaryRow:
    id: str
    base_parent_id: Optional[str]
    reference_parent_id: Optional[str]
    status: Status
    timings: Optional[list[float]]
    failure_marker: Optional[str]
    aggregate_score: Optional[float]


@dataclass(frozen=True)
class PopulationSummary:
    rows: list[SummaryRow]
    shapes: list[BenchmarkShape]

    def __len__(self) -> int:
        return len(self.rows)

    def render(self) -> str:
        """Plain-text table with one column per benchmark shape."""
        header = ["id", "base", "reference", "status"] + [s.label for s in self.shapes] + ["geomean_us"]
        lines = [" | ".join(header)]
        for row in self.rows:
            cells = [row.id, row.base_parent_id or _NONE, row.reference_parent_id or _NONE, row.status.value]
            if row.timings is not None:
                cells += [f"{t:.3f}" for t in row.timings]
            else:
                cells += [row.failure_marker or _NONE] * len(self.shapes)
            cells.append(f"{row.aggregate_score:.3f}" if row.aggregate_score is not None else _NONE)
            lines.append(" | ".join(cells))
        return "\n".join(lines)


class Population:
    """Ordered store of KernelRecords.

    Single writer: mutations are expected from one control loop only.
    """

    def __init__(self, root: Path | str, shapes: Optional[list[BenchmarkShape]] = None):
        self.root = Path(root)
        self.shapes = list(shapes) if shapes is not None else None
        self._records: dict[str, KernelRecord] = {}
        self.root.mkdir(parents=True, exist_ok=True)
        self._load()

    @property
    def index_path(self) -> Path:
        return self.root / "index"

    # -- loading -----------------------------------------------------------

    def _load(self) -> None:
        if not self.index_path.exists():
            return
        for lineno, line in enumerate(self.index_path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 5:
                raise StorageError(f"{self.index_path}:{lineno}: malformed index line {line!r}")
            rid = parts[0]
            try:
                record = self._read_record(rid)
            except (OSError, KeyError, TypeError, ValueError) as exc:
                raise StorageError(f"record {rid} unreadable: {exc}") from exc
            if record.created_seq != int(parts[4]) or record.status.value != parts[3]:
                raise StorageError(f"record {rid} disagrees with index line {lineno}")
            self._records[rid] = record

    def _read_record(self, rid: str) -> KernelRecord:
        rdir = self.root / rid
        meta = load_document((rdir / "meta").read_text(encoding="utf-8"))
        source = (rdir / "source.kernel").read_text(encoding="utf-8")
        bench_path = rdir / "benchmark"
        benchmark = None
        if bench_path.exists():
            benchmark = BenchmarkReport.from_dict(load_document(bench_path.read_text(encoding="utf-8")))
        experiment = meta.get("experiment")
        return KernelRecord(
            id=meta["id"],
            source=source,
            base_parent_id=meta.get("base_parent_id"),
            reference_parent_id=meta.get("reference_parent_id"),
            experiment=ExperimentPlan.from_dict(experiment) if experiment else None,
            technique_report=meta.get("technique_report"),
            benchmark=benchmark,
            status=Status(meta["status"]),
            created_seq=int(meta["created_seq"]),
            generation=int(meta.get("generation", 0)),
            failure_detail=meta.get("failure_detail"),
        )

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, rid: object) -> bool:
        return rid in self._records

    def __iter__(self) -> Iterator[KernelRecord]:
        return iter(sorted(self._records.values(), key=lambda r: r.created_seq))

    def get(self, rid: str) -> KernelRecord:
        try:
            return self._records[rid]
        except KeyError:
            raise UnknownIdError(f"unknown kernel id {rid!r}") from None

    def ids(self) -> list[str]:
        return [r.id for r in self]  # type: ignore[misc]

    def eligible(self) -> list[KernelRecord]:
        return [r for r in self if r.eligible]

    def record_dir(self, rid: str) -> Path:
        return self.root / rid

    def lineage(self, rid: str) -> list[str]:
        """Follow base parents from ``rid`` back to its seed (inclusive)."""
        chain = []
        current: Optional[str] = rid
        while current is not None:
            chain.append(current)
            current = self.get(current).base_parent_id
        return chain

    # -- mutation ----------------------------------------------------------

    def add_record(self, record: KernelRecord) -> str:
        if record.id is not None:
            raise ValueError("record id is assigned by the store")
        for parent in (record.base_parent_id, record.reference_parent_id):
            if parent is not None and parent not in self._records:
                raise UnknownParentError(f"unknown parent id {parent!r}")
        self._check_invariants(record)

        seq = max((r.created_seq for r in self._records.values()), default=0) + 1
        record.id = format_id(seq)
        record.created_seq = seq
        try:
            self._write_record(record)
            with self.index_path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(self._index_line(record))
        except OSError as exc:
            record.id = None
            raise StorageError(f"could not persist record: {exc}") from exc
        self._records[record.id] = record
        logger.debug("added record %s (%s)", record.id, record.status.value)
        return record.id

    def _check_invariants(self, record: KernelRecord) -> None:
        has_parents = record.base_parent_id is not None or record.reference_parent_id is not None
        if has_parents and (record.base_parent_id is None or record.reference_parent_id is None):
            raise ValueError("a child record needs both base and reference parents")
        if has_parents != (record.experiment is not None):
            raise ValueError("parents and experiment must be both present or both absent")
        if record.status is Status.SEED and has_parents:
            raise ValueError("seed records cannot have parents")
        if record.status in (Status.EVALUATED, Status.SEED) and record.benchmark is not None:
            if not record.benchmark.all_correct:
                raise ValueError("a benchmark with incorrect entries requires status incorrect")
        if record.status is Status.EVALUATED and record.benchmark is None:
            raise ValueError("evaluated records need a benchmark report")
        if record.benchmark is not None and self.shapes is not None and not record.benchmark.covers(self.shapes):
            raise ValueError("benchmark report does not cover the configured shapes in order")

    @staticmethod
    def _index_line(record: KernelRecord) -> str:
        return (
            f"{record.id} {record.base_parent_id or _NONE} {record.reference_parent_id or _NONE} "
            f"{record.status.value} {record.created_seq}\n"
        )

    def _meta_document(self, record: KernelRecord) -> dict:
        return {
            "id": record.id,
            "base_parent_id": record.base_parent_id,
            "reference_parent_id": record.reference_parent_id,
            "status": record.status.value,
            "created_seq": record.created_seq,
            "generation": record.generation,
            "experiment": record.experiment.to_dict() if record.experiment else None,
            "technique_report": record.technique_report,
            "failure_detail": record.failure_detail,
        }

    def _write_record(self, record: KernelRecord) -> None:
        rdir = self.record_dir(record.id)  # type: ignore[arg-type]
        (rdir / "transcripts").mkdir(parents=True, exist_ok=True)
        write_atomic(rdir / "source.kernel", record.source)
        write_atomic(rdir / "meta", dump_document(self._meta_document(record)))
        if record.benchmark is not None:
            write_atomic(rdir / "benchmark", dump_document(record.benchmark.to_dict()))

    def save_to(self, root: Path | str) -> "Population":
        """Write every record and the index under a new root; used for export and round-trip checks."""
        target = Population(root, self.shapes)
        if len(target):
            raise StorageError(f"{root} already holds a population")
        for record in self:
            target._write_record(record)
            target._records[record.id] = record  # type: ignore[index]
        write_atomic(target.index_path, "".join(self._index_line(r) for r in self))
        return target

    def rollback_generation(self, generation: int) -> list[str]:
        """Drop records created in ``generation`` or later (crash recovery).

        Such records always form a suffix of the index since generations run
        strictly in order.
        """
        doomed = [r for r in self if r.generation >= generation and not r.is_seed]
        if not doomed:
            return []
        keep = [r for r in self if r not in doomed]
        if keep and doomed and min(r.created_seq for r in doomed) < max(r.created_seq for r in keep):
            raise StorageError("records to roll back are not a suffix of the index")
        write_atomic(self.index_path, "".join(self._index_line(r) for r in keep))
        for r in doomed:
            shutil.rmtree(self.record_dir(r.id), ignore_errors=True)  # type: ignore[arg-type]
            del self._records[r.id]  # type: ignore[arg-type]
        logger.warning("rolled back %d record(s) from interrupted generation %d", len(doomed), generation)
        return [r.id for r in doomed]  # type: ignore[misc]

    # -- derived views -----------------------------------------------------

    def summarize(self) -> PopulationSummary:
        shapes = self.shapes
        if shapes is None:
            shapes = next((r.benchmark.shapes for r in self if r.benchmark is not None), [])
        rows = []
        for r in self:
            score = r.aggregate_score
            timings = [e.mean_time_us for e in r.benchmark.entries] if score is not None else None
            marker = None if score is not None else f"<{r.status.value}>"
            rows.append(SummaryRow(r.id, r.base_parent_id, r.reference_parent_id, r.status, timings, marker, score))  # type: ignore[arg-type]
        return PopulationSummary(rows=rows, shapes=list(shapes))

    def best_record(self) -> str:
        scored = [(r.aggregate_score, r.created_seq, r.id) for r in self if r.aggregate_score is not None]
        if not scored:
            raise NoEvaluatedRecordsError("population holds no successfully evaluated records")
        return min(scored)[2]  # type: ignore[return-value]

    def best_score(self) -> Optional[float]:
        try:
            return self.get(self.best_record()).aggregate_score
        except NoEvaluatedRecordsError:
            return None

    def one_step_analysis(self, rid: str) -> str:
        record = self.get(rid)
        lines = [f"Kernel {rid} ({record.status.value})"]
        if record.base_parent_id is None:
            lines.append("seed kernel, no prior experiment.")
        else:
            plan = record.experiment
            base = self.get(record.base_parent_id)
            lines.append(f"Produced from base {base.id} with reference {record.reference_parent_id}.")
            lines.append("Experiment description:")
            lines.append(plan.description if plan else _NONE)
            if plan:
                lines.append("Experiment rubric:")
                lines.append(plan.rubric)
            lines.append(f"Base parent {base.id} benchmark:")
            lines.append(_benchmark_block(base))
        lines.append(f"Kernel {rid} benchmark:")
        lines.append(_benchmark_block(record))
        if record.technique_report:
            lines.append("Technique report from the kernel writer:")
            lines.append(record.technique_report)
        return "\n".join(lines)

    def require_nonempty(self) -> None:
        if not self._records:
            raise EmptyPopulationError("population is empty; seed it first")


def _benchmark_block(record: KernelRecord) -> str:
    if record.benchmark is not None and record.benchmark.all_correct:
        return record.benchmark.table()
    detail = f": {record.failure_detail}" if record.failure_detail else ""
    if record.benchmark is not None:
        return record.benchmark.table() + f"\n  <{record.status.value}>{detail}"
    return f"  <{record.status.value}>{detail}"

"""Domain records shared by the population store and the pipeline stages."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional


class Status(str, enum.Enum):
    SEED = "seed"
    PENDING = "pending"
    EVALUATED = "evaluated"
    BUILD_FAILED = "build_failed"
    INCORRECT = "incorrect"
    EVAL_ERROR = "eval_error"

    @property
    def failed(self) -> bool:
        return self in (Status.BUILD_FAILED, Status.INCORRECT, Status.EVAL_ERROR)


@dataclass(frozen=True, order=True)
class BenchmarkShape:
    m: int
    k: int
    n: int

    def __post_init__(self) -> None:
        for name in ("m", "k", "n"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"shape dimension {name} must be a positive integer, got {value!r}")

    @property
    def label(self) -> str:
        return f"{self.m}x{self.k}x{self.n}"

    def __str__(self) -> str:
        return f"m={self.m}, k={self.k}, n={self.n}"


@dataclass(frozen=True)
class BenchmarkEntry:
    shape: BenchmarkShape
    mean_time_us: float
    correct: bool = True

    def __post_init__(self) -> None:
        if not (self.mean_time_us > 0 and math.isfinite(self.mean_time_us)):
            raise ValueError(f"mean_time_us must be positive and finite, got {self.mean_time_us!r}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class BenchmarkReport:
    entries: list[BenchmarkEntry]
    evaluated_at: str = field(default_factory=_now)

    @property
    def shapes(self) -> list[BenchmarkShape]:
        return [e.shape for e in self.entries]

    @property
    def all_correct(self) -> bool:
        return all(e.correct for e in self.entries)

    def covers(self, shapes: list[BenchmarkShape]) -> bool:
        return self.shapes == list(shapes)

    def aggregate_score(self) -> float:
        """Geometric mean of per-shape mean times; lower is better."""
        times = [e.mean_time_us for e in self.entries]
        return math.exp(math.fsum(math.log(t) for t in times) / len(times))

    def table(self) -> str:
        lines = [
            f"  {e.shape.label:>20}  {e.mean_time_us:14.3f} us  {'correct' if e.correct else 'INCORRECT'}"
            for e in self.entries
        ]
        lines.append(f"  {'geomean':>20}  {self.aggregate_score():14.3f} us")
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "evaluated_at": self.evaluated_at,
            "entries": [
                {
                    "m": e.shape.m,
                    "k": e.shape.k,
                    "n": e.shape.n,
                    "mean_time_us": float(e.mean_time_us),
                    "correct": bool(e.correct),
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BenchmarkReport":
        entries = [
            BenchmarkEntry(BenchmarkShape(row["m"], row["k"], row["n"]), float(row["mean_time_us"]), bool(row["correct"]))
            for row in data["entries"]
        ]
        return cls(entries=entries, evaluated_at=str(data.get("evaluated_at", "")))


@dataclass(frozen=True)
class ExperimentPlan:
    description: str
    rubric: str
    performance: tuple[float, float]
    innovation: float
    ordinal: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.performance
        if not self.description.strip():
            raise ValueError("plan description is empty")
        if not self.rubric.strip():
            raise ValueError("plan rubric is empty")
        if lo > hi:
            raise ValueError(f"performance range [{lo}, {hi}] has lo > hi")
        if not 0 <= self.innovation <= 100:
            raise ValueError(f"innovation {self.innovation} outside [0, 100]")

    @property
    def lo(self) -> float:
        return self.performance[0]

    @property
    def hi(self) -> float:
        return self.performance[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "ordinal": self.ordinal,
            "description": self.description,
            "rubric": self.rubric,
            "performance": [_plain_number(self.lo), _plain_number(self.hi)],
            "innovation": _plain_number(self.innovation),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentPlan":
        lo, hi = data["performance"]
        return cls(
            description=data["description"],
            rubric=data["rubric"],
            performance=(lo, hi),
            innovation=data["innovation"],
            ordinal=int(data.get("ordinal", 0)),
        )


def _plain_number(x: float) -> float | int:
    return int(x) if float(x).is_integer() else float(x)


@dataclass
class KernelRecord:
    source: str
    id: Optional[str] = None
    base_parent_id: Optional[str] = None
    reference_parent_id: Optional[str] = None
    experiment: Optional[ExperimentPlan] = None
    technique_report: Optional[str] = None
    benchmark: Optional[BenchmarkReport] = None
    status: Status = Status.SEED
    created_seq: int = 0
    generation: int = 0
    failure_detail: Optional[str] = None

    @property
    def is_seed(self) -> bool:
        return self.status is Status.SEED

    @property
    def eligible(self) -> bool:
        """Usable as Base or Reference: benchmarked and not failed."""
        return self.status in (Status.EVALUATED, Status.SEED) and self.benchmark is not None and self.benchmark.all_correct

    @property
    def aggregate_score(self) -> Optional[float]:
        return self.benchmark.aggregate_score() if self.eligible else None

"""Kernel evaluation behind one blocking, process-wide serialized entry point.

Two evaluator kinds are provided:

``external_command``
    Runs a shell-free command built from a template with ``{source_path}``,
    ``{shapes_path}`` and ``{result_path}`` placeholders inside a private temp
    directory (also the working directory). The shapes file holds one
    ``m k n`` triple per line. Exit status 0 means the result file is
    authoritative; it must hold one ``m k n mean_time_us correct`` row per
    configured shape, in order. Any other exit status is a build/run failure.

``mock``
    Deterministic stand-in used by tests and dry runs. Timing for a shape is
    ``sqrt(m*k*n)`` microseconds scaled by the factor of every marker token
    found in the source.

Only one evaluation is ever in flight per process; concurrent callers queue
in arrival order.
"""

from __future__ import annotations

import logging
import math
import re
import shlex
import subprocess
import tempfile
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

from .models import BenchmarkEntry, BenchmarkReport, BenchmarkShape, Status

logger = logging.getLogger(__name__)

RESULT_FILE = "result.txt"
SHAPES_FILE = "shapes.txt"
SOURCE_FILE = "source.kernel"
_TRUE = {"1", "true", "yes", "pass", "ok"}
_FALSE = {"0", "false", "no", "fail"}


@dataclass
class EvaluatorConfig:
    kind: str
    shapes: list[BenchmarkShape]
    command_template: str = ""
    timeout_s: float = 600.0
    marker_factors: dict[str, float] = field(default_factory=dict)
    incorrect_marker: str = "BUG"
    build_fail_marker: str = "BUILD_FAIL"

    def __post_init__(self) -> None:
        if self.kind not in EVALUATORS:
            raise ValueError(f"unknown evaluator kind {self.kind!r}")
        if not self.shapes:
            raise ValueError("evaluator needs at least one benchmark shape")
        if len(set(self.shapes)) != len(self.shapes):
            raise ValueError("duplicate benchmark shapes")
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")
        if self.kind == "external_command" and "{source_path}" not in self.command_template:
            raise ValueError("command_template must contain {source_path}")
        for token, factor in self.marker_factors.items():
            if not factor > 0:
                raise ValueError(f"marker {token!r} factor must be positive")


@dataclass
class EvalOutcome:
    """Exactly one of: a report (status evaluated) or a failure with detail text."""

    status: Status
    report: Optional[BenchmarkReport] = None
    detail: str = ""

    def __post_init__(self) -> None:
        if (self.status is Status.EVALUATED) != (self.report is not None):
            raise ValueError("a report is present iff the outcome is evaluated")
        if self.status not in (Status.EVALUATED, Status.BUILD_FAILED, Status.INCORRECT, Status.EVAL_ERROR):
            raise ValueError(f"{self.status} is not an evaluation outcome")

    @property
    def ok(self) -> bool:
        return self.status is Status.EVALUATED

    def summary(self) -> str:
        if self.report is not None:
            return f"evaluated geomean={self.report.aggregate_score():.3f}us"
        first = self.detail.strip().splitlines()[0] if self.detail.strip() else ""
        return f"{self.status.value}: {first}"[:200]


class _FifoGuard:
    """Mutual exclusion that admits waiters strictly in arrival order."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._next_ticket = 0
        self._serving = 0

    @contextmanager
    def hold(self) -> Iterator[None]:
        with self._cond:
            ticket = self._next_ticket
            self._next_ticket += 1
            while ticket != self._serving:
                self._cond.wait()
        try:
            yield
        finally:
            with self._cond:
                self._serving += 1
                self._cond.notify_all()


_GUARD = _FifoGuard()


def evaluate(source: str, config: EvaluatorConfig) -> EvalOutcome:
    if not source.strip():
        raise ValueError("cannot evaluate empty source")
    with _GUARD.hold():
        return EVALUATORS[config.kind](source, config)


# -- mock --------------------------------------------------------------------


def _marker_pattern(token: str) -> re.Pattern[str]:
    return re.compile(rf"(?<![A-Za-z0-9_]){re.escape(token)}(?![A-Za-z0-9_])")


def markers_present(source: str, tokens: list[str] | dict[str, float]) -> list[str]:
    return [t for t in tokens if _marker_pattern(t).search(source)]


def mock_timing(source: str, shape: BenchmarkShape, marker_factors: Optional[dict[str, float]] = None) -> float:
    base = math.sqrt(shape.m * shape.k * shape.n)
    factors = marker_factors or {}
    return base * math.prod(factors[t] for t in sorted(markers_present(source, factors)))


def _evaluate_mock(source: str, config: EvaluatorConfig) -> EvalOutcome:
    if config.build_fail_marker and markers_present(source, [config.build_fail_marker]):
        return EvalOutcome(Status.BUILD_FAILED, detail=f"mock build failure: {config.build_fail_marker} present")
    if config.incorrect_marker and markers_present(source, [config.incorrect_marker]):
        detail = "\n".join(f"{s.label}: incorrect" for s in config.shapes)
        return EvalOutcome(Status.INCORRECT, detail=detail)
    entries = [BenchmarkEntry(s, mock_timing(source, s, config.marker_factors), True) for s in config.shapes]
    return EvalOutcome(Status.EVALUATED, report=BenchmarkReport(entries))


# -- external command ----------------------------------------------------------


def write_shapes_file(path: Path, shapes: list[BenchmarkShape]) -> None:
    path.write_text("".join(f"{s.m} {s.k} {s.n}\n" for s in shapes), encoding="utf-8")


def parse_result_file(text: str, shapes: list[BenchmarkShape]) -> EvalOutcome:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            return EvalOutcome(Status.EVAL_ERROR, detail=f"result line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            shape = BenchmarkShape(int(parts[0]), int(parts[1]), int(parts[2]))
            time_us = float(parts[3])
        except ValueError as exc:
            return EvalOutcome(Status.EVAL_ERROR, detail=f"result line {lineno}: {exc}")
        flag = parts[4].lower()
        if flag not in _TRUE | _FALSE:
            return EvalOutcome(Status.EVAL_ERROR, detail=f"result line {lineno}: bad correctness flag {parts[4]!r}")
        rows.append((shape, time_us, flag in _TRUE))

    if [r[0] for r in rows] != list(shapes):
        got = ", ".join(r[0].label for r in rows) or "nothing"
        return EvalOutcome(Status.EVAL_ERROR, detail=f"result shapes [{got}] do not match configured shapes")
    if not all(ok for _, _, ok in rows):
        detail = "\n".join(f"{s.label}: {'correct' if ok else 'incorrect'}" for s, _, ok in rows)
        return EvalOutcome(Status.INCORRECT, detail=detail)
    try:
        entries = [BenchmarkEntry(s, t, True) for s, t, _ in rows]
    except ValueError as exc:
        return EvalOutcome(Status.EVAL_ERROR, detail=str(exc))
    return EvalOutcome(Status.EVALUATED, report=BenchmarkReport(entries))


def _evaluate_external(source: str, config: EvaluatorConfig) -> EvalOutcome:
    with tempfile.TemporaryDirectory(prefix="kernel-eval-") as tmp:
        work = Path(tmp)
        source_path = work / SOURCE_FILE
        shapes_path = work / SHAPES_FILE
        result_path = work / RESULT_FILE
        source_path.write_text(source, encoding="utf-8")
        write_shapes_file(shapes_path, config.shapes)
        command = shlex.split(
            config.command_template.format(
                source_path=shlex.quote(str(source_path)),
                shapes_path=shlex.quote(str(shapes_path)),
                result_path=shlex.quote(str(result_path)),
            )
        )
        logger.info("evaluating: %s", " ".join(command))
        try:
            proc = subprocess.run(command, cwd=work, capture_output=True, text=True, timeout=config.timeout_s)
        except subprocess.TimeoutExpired:
            return EvalOutcome(Status.EVAL_ERROR, detail=f"evaluation timed out after {config.timeout_s}s")
        except OSError as exc:
            return EvalOutcome(Status.EVAL_ERROR, detail=f"could not start evaluator: {exc}")
        output = (proc.stdout or "") + (proc.stderr or "")
        if proc.returncode != 0:
            return EvalOutcome(Status.BUILD_FAILED, detail=f"exit status {proc.returncode}\n{output}")
        if not result_path.exists():
            return EvalOutcome(Status.EVAL_ERROR, detail=f"evaluator exited 0 without a result file\n{output}")
        return parse_result_file(result_path.read_text(encoding="utf-8"), config.shapes)


EVALUATORS: dict[str, Callable[[str, EvaluatorConfig], EvalOutcome]] = {
    "mock": _evaluate_mock,
    "external_command": _evaluate_external,
}

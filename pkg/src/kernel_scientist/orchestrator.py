"""The generation loop: select parents, design experiments, write kernels, evaluate.

Workspace layout::

    population/            see kernel_scientist.population
    knowledge/             see kernel_scientist.knowledge
    generations/<seq>/
        selector/          selector transcripts
        selection          the Base/Reference decision document
        designer/          designer transcripts
        design             all avenues and plans, with the chosen ordinals
        writer-<1..3>/     writer transcripts, one directory per chosen plan
        log                GenerationLog; written last, marks the generation done

A generation without a ``log`` was interrupted. It is rolled back and rerun
on the next start, so a resumed run retraces an uninterrupted one.
"""

from __future__ import annotations

import logging
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .config import RunConfig
from .designer import design_experiments
from .documents import dump_document, load_document, write_atomic
from .errors import KernelScientistError, ParseExhaustedError, TransportError
from .evaluation import EvalOutcome, evaluate
from .knowledge import KnowledgeBase
from .llm import LlmGateway, OpenAICompatibleBackend
from .models import KernelRecord, Status
from .population import Population
from .selector import SelectionDecision, select_parents
from .writer import KernelCandidate, assemble_writer_context, write_kernel

logger = logging.getLogger(__name__)

WRITER_INSTANCES = 3
ABANDONED = "abandoned"


@dataclass
class ExperimentOutcome:
    plan_ordinal: int
    record_id: Optional[str]
    summary: str

    def to_dict(self) -> dict:
        return {"plan": self.plan_ordinal, "record": self.record_id or ABANDONED, "outcome": self.summary}


@dataclass
class GenerationLog:
    seq: int
    status: str = "completed"
    reason: Optional[str] = None
    decision: Optional[SelectionDecision] = None
    plans_chosen: list[int] = field(default_factory=list)
    outcomes: list[ExperimentOutcome] = field(default_factory=list)
    best_id: Optional[str] = None
    best_score: Optional[float] = None
    wall_time_s: float = 0.0

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    @property
    def new_ids(self) -> list[str]:
        return [o.record_id for o in self.outcomes if o.record_id]

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "status": self.status,
            "reason": self.reason,
            "decision": None
            if self.decision is None
            else {
                "basis_code": self.decision.basis_code,
                "basis_reference": self.decision.basis_reference,
                "degenerate": self.decision.degenerate,
            },
            "plans_chosen": list(self.plans_chosen),
            "outcomes": [o.to_dict() for o in self.outcomes],
            "best_id": self.best_id,
            "best_score": self.best_score,
            "wall_time_s": round(self.wall_time_s, 3),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationLog":
        decision = None
        if data.get("decision"):
            d = data["decision"]
            decision = SelectionDecision(d["basis_code"], d["basis_reference"], "", bool(d.get("degenerate")))
        outcomes = [
            ExperimentOutcome(o["plan"], None if o["record"] == ABANDONED else o["record"], o["outcome"])
            for o in data.get("outcomes") or []
        ]
        return cls(
            seq=int(data["seq"]),
            status=data["status"],
            reason=data.get("reason"),
            decision=decision,
            plans_chosen=list(data.get("plans_chosen") or []),
            outcomes=outcomes,
            best_id=data.get("best_id"),
            best_score=data.get("best_score"),
            wall_time_s=float(data.get("wall_time_s", 0.0)),
        )


class Orchestrator:
    def __init__(
        self,
        root: Path | str,
        config: Optional[RunConfig] = None,
        gateway: Optional[LlmGateway] = None,
    ):
        self.root = Path(root)
        self._config = config
        self.gateway = gateway
        self.population = Population(self.root / "population", config.shapes if config else None)
        self.knowledge = KnowledgeBase(self.root / "knowledge")
        self.generations_dir = self.root / "generations"

    @property
    def config(self) -> RunConfig:
        if self._config is None:
            raise KernelScientistError("this operation needs a run configuration")
        return self._config

    # -- seeding -----------------------------------------------------------

    def seed(self, sources: list[str]) -> list[str]:
        """Evaluate each seed source in turn and store it; failures are recorded, not raised."""
        if not sources:
            raise ValueError("at least one seed source is required")
        ids = []
        for source in sources:
            outcome = evaluate(source, self.config.evaluator)
            status = Status.SEED if outcome.ok else outcome.status
            record = KernelRecord(
                source=source,
                benchmark=outcome.report,
                status=status,
                generation=0,
                failure_detail=outcome.detail or None,
            )
            ids.append(self.population.add_record(record))
            logger.info("seed %s: %s", ids[-1], outcome.summary())
        return ids

    # -- generations -------------------------------------------------------

    def generation_dir(self, seq: int) -> Path:
        return self.generations_dir / f"{seq:05d}"

    def logs(self) -> list[GenerationLog]:
        logs = []
        if self.generations_dir.exists():
            for path in sorted(self.generations_dir.glob("*/log")):
                logs.append(GenerationLog.from_dict(load_document(path.read_text(encoding="utf-8"))))
        return logs

    def next_seq(self) -> int:
        logs = self.logs()
        return logs[-1].seq + 1 if logs else 1

    def _require_gateway(self) -> LlmGateway:
        if self.gateway is None:
            raise KernelScientistError("no LLM gateway configured")
        return self.gateway

    def run_generation(self) -> GenerationLog:
        gateway = self._require_gateway()
        seq = self.next_seq()
        gen_dir = self.generation_dir(seq)
        self.population.rollback_generation(seq)
        if gen_dir.exists():
            shutil.rmtree(gen_dir)
        gen_dir.mkdir(parents=True)
        started = time.monotonic()
        log = GenerationLog(seq=seq)
        knowledge = self.knowledge.snapshot(self.config.context_byte_budget)

        try:
            decision = select_parents(self.population, gateway, log_dir=gen_dir / "selector")
            log.decision = decision
            write_atomic(gen_dir / "selection", decision.to_document())
            base = self.population.get(decision.basis_code)
            _, chosen = design_experiments(
                base, knowledge, gateway, log_dir=gen_dir / "designer", design_path=gen_dir / "design"
            )
        except (ParseExhaustedError, TransportError) as exc:
            log.status, log.reason = "aborted", str(exc)
            logger.error("generation %d aborted: %s", seq, exc)
            return self._finish(log, started)

        log.plans_chosen = [p.ordinal for p in chosen]
        task = self.config.task_description()
        contexts = [assemble_writer_context(decision, plan, self.population, knowledge, task) for plan in chosen]

        def write(i: int) -> KernelCandidate | Exception:
            try:
                return write_kernel(contexts[i], gateway, log_dir=gen_dir / f"writer-{i + 1}")
            except (ParseExhaustedError, TransportError) as exc:
                return exc

        with ThreadPoolExecutor(max_workers=WRITER_INSTANCES, thread_name_prefix="writer") as pool:
            results = list(pool.map(write, range(len(contexts))))

        for i, (plan, result) in enumerate(zip(chosen, results), 1):
            if isinstance(result, Exception):
                logger.warning("generation %d plan %d abandoned: %s", seq, plan.ordinal, result)
                log.outcomes.append(ExperimentOutcome(plan.ordinal, None, f"{ABANDONED}: {result}"))
                continue
            outcome = evaluate(result.source, self.config.evaluator)
            rid = self._store_child(decision, plan, result, outcome, seq)
            self._attach_transcripts(gen_dir / f"writer-{i}", rid)
            log.outcomes.append(ExperimentOutcome(plan.ordinal, rid, outcome.summary()))
        return self._finish(log, started)

    def _store_child(self, decision, plan, candidate: KernelCandidate, outcome: EvalOutcome, seq: int) -> str:
        record = KernelRecord(
            source=candidate.source,
            base_parent_id=decision.basis_code,
            reference_parent_id=decision.basis_reference,
            experiment=plan,
            technique_report=candidate.technique_report,
            benchmark=outcome.report,
            status=outcome.status,
            generation=seq,
            failure_detail=outcome.detail or None,
        )
        return self.population.add_record(record)

    def _attach_transcripts(self, writer_dir: Path, rid: str) -> None:
        target = self.population.record_dir(rid) / "transcripts"
        for path in sorted(writer_dir.glob("transcript-*")):
            shutil.copy2(path, target / path.name)

    def _finish(self, log: GenerationLog, started: float) -> GenerationLog:
        log.wall_time_s = time.monotonic() - started
        best = self.population.best_score()
        if best is not None:
            log.best_id, log.best_score = self.population.best_record(), best
        write_atomic(self.generation_dir(log.seq) / "log", dump_document(log.to_dict()))
        return log

    def run(self, n_generations: int, report: Optional[Callable[[str], None]] = None) -> dict:
        """Run up to ``n_generations`` more generations, resuming from persisted state."""
        if n_generations < 0:
            raise ValueError("n_generations must be nonnegative")
        self.population.require_nonempty()
        ran: list[GenerationLog] = []
        for _ in range(n_generations):
            cap = self.config.max_generations
            if cap is not None and self.next_seq() > cap:
                logger.info("max_generations=%d reached", cap)
                break
            log = self.run_generation()
            ran.append(log)
            if report is not None:
                score = f"{log.best_score:.3f}us" if log.best_score is not None else "n/a"
                state = f"aborted ({log.reason})" if log.aborted else f"{len(log.new_ids)} new"
                report(f"generation {log.seq}: {state}; best {log.best_id} geomean {score}")
        return self.summary(ran)

    def summary(self, ran: Optional[list[GenerationLog]] = None) -> dict:
        best_id = None
        if self.population.best_score() is not None:
            best_id = self.population.best_record()
        return {
            "generations_run": len(ran or []),
            "generations_total": len(self.logs()),
            "population_size": len(self.population),
            "best_id": best_id,
            "best_score": self.population.best_score(),
            "best_per_generation": [log.best_score for log in ran or []],
        }

    # -- inspection --------------------------------------------------------

    def status(self) -> str:
        self.population.require_nonempty()
        lines = [self.population.summarize().render(), ""]
        score = self.population.best_score()
        if score is None:
            lines.append("best: none (no successfully evaluated kernels)")
        else:
            lines.append(f"best: {self.population.best_record()} geomean {score:.3f} us")
        lines.append(f"generations completed: {len(self.logs())}")
        return "\n".join(lines)

    def export(self, dest: Path | str) -> Path:
        """Write the best kernel, its Base lineage back to a seed and every generation log."""
        self.population.require_nonempty()
        dest = Path(dest)
        dest.mkdir(parents=True, exist_ok=True)
        best_id = self.population.best_record()
        write_atomic(dest / "best.kernel", self.population.get(best_id).source)
        chain = self.population.lineage(best_id)
        write_atomic(dest / "lineage", "".join(f"{rid}\n" for rid in chain))
        for rid in chain:
            src = self.population.record_dir(rid)
            for name in ("source.kernel", "meta", "benchmark"):
                if (src / name).exists():
                    (dest / "records" / rid).mkdir(parents=True, exist_ok=True)
                    shutil.copy2(src / name, dest / "records" / rid / name)
        for path in sorted(self.generations_dir.glob("*/log")) if self.generations_dir.exists() else []:
            (dest / "generations").mkdir(exist_ok=True)
            shutil.copy2(path, dest / "generations" / f"{path.parent.name}.log")
        return dest


def build_gateway(config: RunConfig) -> LlmGateway:
    if not config.endpoint:
        raise KernelScientistError("llm.endpoint is not configured")
    return LlmGateway(OpenAICompatibleBackend(config.endpoint, config.api_key_env), config.roles, config.backoff_s)

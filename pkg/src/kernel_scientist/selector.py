"""Parent selection: the LLM picks a Base and a Reference from the population table."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import yaml

from .documents import clean_scalar, dump_document, fenced_blocks
from .errors import EmptyPopulationError, ParseError
from .llm import LlmGateway
from .population import Population, PopulationSummary

SELECTOR_PROMPT = """\
You are the evolutionary selector of an automated GPU kernel optimisation loop.

Below is every kernel produced so far. Each row gives the kernel id, the ids of
its Base and Reference parents, its status, its mean running time in
microseconds for each benchmark configuration (MxKxN) and the geometric mean
over configurations. Lower times are better. Rows marked <build_failed>,
<incorrect> or <eval_error> did not produce valid timings and cannot be chosen.

{table}

Choose one kernel to be the Base for the next experiment: its code will be
modified. Choose a different kernel to be the Reference: it is shown alongside
the Base to help analyse and contrast the next change. Weigh overall speed,
per-configuration strengths and how the lineage has developed.

Reply with exactly this document and nothing else:

basis_code: "<id>"
basis_reference: "<id>"
rationale: >
  "<why these two were chosen>"
"""


@dataclass(frozen=True)
class SelectionDecision:
    basis_code: str
    basis_reference: str
    rationale: str
    degenerate: bool = False

    def to_document(self) -> str:
        return dump_document(
            {
                "basis_code": self.basis_code,
                "basis_reference": self.basis_reference,
                "rationale": self.rationale,
                "degenerate": self.degenerate,
            }
        )

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionDecision":
        return cls(data["basis_code"], data["basis_reference"], data["rationale"], bool(data.get("degenerate", False)))


def build_selector_prompt(summary: PopulationSummary) -> str:
    if not summary.rows:
        raise EmptyPopulationError("cannot select parents from an empty population")
    return SELECTOR_PROMPT.format(table=summary.render())


_KEYS = ("basis_code", "basis_reference", "rationale")
_KEY_LINE = re.compile(r"^\s*(?:[-*]\s*)?(basis_code|basis_reference|rationale)\s*:")


def _candidate_documents(text: str) -> list[str]:
    candidates = [body for _, body, _ in fenced_blocks(text)]
    lines = text.splitlines()
    start = next((i for i, line in enumerate(lines) if _KEY_LINE.match(line)), None)
    if start is not None:
        indent = len(lines[start]) - len(lines[start].lstrip())
        block = []
        for line in lines[start:]:
            stripped = line.strip()
            if stripped.startswith("```") or stripped.startswith("~~~"):
                break
            if stripped and len(line) - len(line.lstrip()) <= indent and not _KEY_LINE.match(line):
                break
            block.append(line[indent:] if len(line) >= indent else line.strip())
        candidates.append("\n".join(block))
    return candidates


def parse_selection(text: str) -> SelectionDecision:
    """Extract basis_code / basis_reference / rationale from a model reply.

    Surrounding prose and code fences are tolerated. All scalars are read as
    strings so ids such as 00052 keep their leading zeros.
    """
    problems = []
    for doc in _candidate_documents(text):
        try:
            data = yaml.load(doc, Loader=yaml.BaseLoader)
        except yaml.YAMLError as exc:
            problems.append(f"malformed document ({exc.__class__.__name__})")
            continue
        if not isinstance(data, dict):
            continue
        missing = [k for k in _KEYS if not str(data.get(k, "")).strip()]
        if missing:
            problems.append(f"missing field(s): {', '.join(missing)}")
            continue
        return SelectionDecision(
            basis_code=clean_scalar(data["basis_code"]),
            basis_reference=clean_scalar(data["basis_reference"]),
            rationale=clean_scalar(data["rationale"]),
        )
    if not problems:
        problems.append("no document with basis_code, basis_reference and rationale found")
    raise ParseError("; ".join(dict.fromkeys(problems)))


def validate_selection(decision: SelectionDecision, population: Population) -> SelectionDecision:
    """Check the decision against the population; raise ParseError naming the violation."""
    eligible = {r.id for r in population.eligible()}
    for field_name in ("basis_code", "basis_reference"):
        rid = getattr(decision, field_name)
        if rid not in population:
            raise ParseError(f"{field_name} {rid!r} is not an id in the population table")
        if rid not in eligible:
            status = population.get(rid).status.value
            raise ParseError(f"{field_name} {rid!r} has status {status} and cannot be chosen")
    if decision.basis_code == decision.basis_reference:
        if len(eligible) >= 2:
            raise ParseError("basis_code and basis_reference must be different kernels")
        return replace(decision, degenerate=True)
    return decision


def select_parents(
    population: Population,
    gateway: LlmGateway,
    log_dir: Optional[Path] = None,
) -> SelectionDecision:
    if not population.eligible():
        raise EmptyPopulationError("no successfully evaluated kernels to select from")
    prompt = build_selector_prompt(population.summarize())

    def parse(text: str) -> SelectionDecision:
        return validate_selection(parse_selection(text), population)

    return gateway.complete_structured("selector", prompt, parse, log_dir=log_dir)

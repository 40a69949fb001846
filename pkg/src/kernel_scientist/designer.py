"""Experiment design: 10 avenues and 5 plans from the LLM, then a fixed 3-of-5 pick."""

from __future__ import annotations

import numbers
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .documents import clean_scalar, dump_document, fenced_blocks, write_atomic
from .errors import ParseError
from .knowledge import KnowledgeDoc, render_knowledge
from .llm import LlmGateway
from .models import ExperimentPlan, KernelRecord

N_AVENUES = 10
N_PLANS = 5
N_PICKS = 3

DESIGNER_PROMPT = """\
You are the experiment designer of an automated GPU kernel optimisation loop.

# Base kernel {base_id}
This is the code the next experiments will modify.

```
{source}
```

# External notes
{knowledge}

# Task 1: Optimization Avenues
List exactly {n_avenues} distinct avenues that could be explored to make the Base
kernel faster, one bullet per avenue. Be broad: the list is meant to widen the
range of ideas for Task 2.

# Task 2: Experiments
Design exactly {n_plans} concrete experiments. For each give
- description: what the experiment changes and why it should help;
- rubric: several lines of specific directives a kernel writer must carry out;
- performance: [low, high] estimated percent improvement in running time;
- innovation: 0-100, how novel the experiment is relative to the Base.

Reply in this layout:

## Task 1: Optimization Avenues

* **<avenue>:** <one line>
(... {n_avenues} bullets ...)

## Task 2: Experiments

```yaml
experiment:
  - description: >
      "<text>"
    rubric: >
      "<text>"
    performance: [<low>, <high>]
    innovation: <0-100>
  (... {n_plans} entries ...)
```
"""


@dataclass(frozen=True)
class DesignOutput:
    avenues: list[str]
    plans: list[ExperimentPlan]

    def __post_init__(self) -> None:
        if len(self.avenues) != N_AVENUES or len(self.plans) != N_PLANS:
            raise ValueError(f"need {N_AVENUES} avenues and {N_PLANS} plans")

    def to_document(self, chosen: Optional[list[int]] = None) -> str:
        """Render in the same two-task layout the model is asked to produce."""
        parts = ["## Task 1: Optimization Avenues", ""]
        parts += [f"* {a}" for a in self.avenues]
        parts += ["", "## Task 2: Experiments", "", "```yaml"]
        body = {"experiment": [p.to_dict() for p in self.plans]}
        if chosen is not None:
            body["chosen"] = list(chosen)
        parts.append(dump_document(body).rstrip("\n"))
        parts.append("```")
        return "\n".join(parts) + "\n"


def build_designer_prompt(base: KernelRecord, knowledge: list[KnowledgeDoc]) -> str:
    if not base.source.strip():
        raise ValueError(f"base kernel {base.id} has no source")
    return DESIGNER_PROMPT.format(
        base_id=base.id,
        source=base.source.rstrip("\n"),
        knowledge=render_knowledge(knowledge),
        n_avenues=N_AVENUES,
        n_plans=N_PLANS,
    )


_HEADING = re.compile(r"^\s*#{1,6}\s*(.*)$")
_BULLET = re.compile(r"^\s*(?:[-*+]|\d+[.)])\s+(.+?)\s*$")


def _parse_avenues(text: str) -> list[str]:
    lines = text.splitlines()
    start = 0
    for i, line in enumerate(lines):
        m = _HEADING.match(line)
        if m and re.search(r"task\s*1|avenue", m.group(1), re.I):
            start = i + 1
            break
    avenues = []
    for line in lines[start:]:
        m = _HEADING.match(line)
        if m and re.search(r"task\s*2|experiment", m.group(1), re.I):
            break
        stripped = line.strip()
        if stripped.startswith("```") or stripped.startswith("~~~") or stripped.startswith("experiment:"):
            break
        b = _BULLET.match(line)
        if b:
            avenues.append(b.group(1))
    return avenues


def _plans_document(text: str) -> object:
    candidates = [body for lang, body, _ in fenced_blocks(text) if lang in ("yaml", "yml", "")]
    lines = text.splitlines()
    start = next((i for i, line in enumerate(lines) if re.match(r"^\s*experiments?\s*:", line)), None)
    if start is not None:
        candidates.append("\n".join(line for line in lines[start:] if not line.strip().startswith("```")))
    errors = []
    for doc in candidates:
        try:
            data = yaml.safe_load(doc)
        except yaml.YAMLError as exc:
            errors.append(f"experiment block is not valid YAML ({exc.__class__.__name__})")
            continue
        if isinstance(data, dict):
            for key in ("experiment", "experiments"):
                if key in data:
                    return data[key]
        elif isinstance(data, list):
            return data
    raise ParseError(errors[0] if errors else "no experiment block found")


def _number(value: object, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        try:
            return float(str(value).strip().rstrip("%"))
        except ValueError:
            raise ParseError(f"{what} is not a number: {value!r}") from None
    return value  # type: ignore[return-value]


def _parse_plan(item: object, ordinal: int) -> ExperimentPlan:
    where = f"experiment {ordinal}"
    if not isinstance(item, dict):
        raise ParseError(f"{where} is not a mapping with description/rubric/performance/innovation")
    missing = [k for k in ("description", "rubric", "performance", "innovation") if item.get(k) in (None, "")]
    if missing:
        raise ParseError(f"{where} is missing {', '.join(missing)}")
    perf = item["performance"]
    if not isinstance(perf, (list, tuple)) or len(perf) != 2:
        raise ParseError(f"{where}: performance must be a [low, high] pair, got {perf!r}")
    lo, hi = (_number(v, f"{where} performance bound") for v in perf)
    innovation = _number(item["innovation"], f"{where} innovation")
    if lo > hi:
        raise ParseError(f"{where}: performance range [{lo}, {hi}] has low > high")
    if not 0 <= innovation <= 100:
        raise ParseError(f"{where}: innovation {innovation} is outside 0-100")
    description = clean_scalar(item["description"])
    rubric = clean_scalar(item["rubric"])
    if not description or not rubric:
        raise ParseError(f"{where}: description and rubric must be nonempty")
    return ExperimentPlan(description, rubric, (lo, hi), innovation, ordinal)


_ELISION = re.compile(r"^\W*(\.\.\.|…)")


def parse_plans(text: str) -> list[ExperimentPlan]:
    """Parse the experiment list alone, with no count check.

    A trailing scalar item such as ``- ... etc ...`` is read as an elision
    marker and dropped, so abbreviated listings still yield their plans.
    """
    items = _plans_document(text)
    if not isinstance(items, list):
        raise ParseError("the experiment block must be a list of experiments")
    while items and isinstance(items[-1], str) and _ELISION.match(items[-1]):
        items = items[:-1]
    return [_parse_plan(item, i) for i, item in enumerate(items, 1)]


def parse_design(text: str) -> DesignOutput:
    avenues = _parse_avenues(text)
    if len(avenues) != N_AVENUES:
        raise ParseError(f"expected {N_AVENUES} avenues under Task 1, found {len(avenues)}")
    plans = parse_plans(text)
    if len(plans) != N_PLANS:
        raise ParseError(f"expected {N_PLANS} experiments under Task 2, found {len(plans)}")
    return DesignOutput(avenues, plans)


def pick_experiments(plans: list[ExperimentPlan]) -> list[ExperimentPlan]:
    """Choose 3 of 5 plans without replacement.

    In order: highest innovation, then highest upper performance estimate,
    then highest lower performance estimate. Ties go to the plan that came
    first in the model's output.
    """
    if len(plans) != N_PLANS:
        raise ValueError(f"expected {N_PLANS} plans, got {len(plans)}")
    remaining = sorted(plans, key=lambda p: p.ordinal)
    picks = []
    for criterion in (lambda p: p.innovation, lambda p: p.hi, lambda p: p.lo):
        best = max(remaining, key=lambda p: (criterion(p), -p.ordinal))
        picks.append(best)
        remaining = [p for p in remaining if p is not best]
    return picks


def design_experiments(
    base: KernelRecord,
    knowledge: list[KnowledgeDoc],
    gateway: LlmGateway,
    log_dir: Optional[Path] = None,
    design_path: Optional[Path] = None,
) -> tuple[DesignOutput, list[ExperimentPlan]]:
    """Returns the full design and the three chosen plans; the design is archived at ``design_path``."""
    prompt = build_designer_prompt(base, knowledge)
    design = gateway.complete_structured("designer", prompt, parse_design, log_dir=log_dir)
    chosen = pick_experiments(design.plans)
    if design_path is not None:
        write_atomic(design_path, design.to_document([p.ordinal for p in chosen]))
    return design, chosen

"""Kernel writing: assemble the full context and get back a complete kernel plus a technique report."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .documents import fenced_blocks
from .errors import ParseError
from .knowledge import KnowledgeDoc, render_knowledge
from .llm import LlmGateway
from .models import ExperimentPlan
from .population import Population
from .selector import SelectionDecision

WRITER_PROMPT = """\
You are the kernel writer of an automated GPU kernel optimisation loop. Your
job is to implement one experiment on top of the Base kernel.

# Task description
{task}

# Findings
{findings}

# Reference kernel {reference_id}
Shown for contrast and analysis only; do not modify it.

```
{reference_listing}
```

## One-step experiment analysis of the Reference
{reference_analysis}

# Base kernel {base_id}
Your new kernel starts from this code.

```
{base_listing}
```

## One-step experiment analysis of the Base
{base_analysis}

# Experiment to implement
Description:
{description}

Rubric:
{rubric}

# Output format
1. The complete new kernel source file, including its calling code, in a single
   fenced code block. Output the whole file, not a diff or a fragment.
2. A section headed "## Technique report" describing in a few sentences which
   techniques you actually used and any rubric items you did not follow.
"""


@dataclass(frozen=True)
class WriterContext:
    task_description: str
    findings: list[KnowledgeDoc]
    base_id: str
    reference_id: str
    base_listing: str
    reference_listing: str
    base_analysis: str
    reference_analysis: str
    plan: ExperimentPlan

    def __post_init__(self) -> None:
        for name in ("task_description", "base_listing", "reference_listing", "base_analysis", "reference_analysis"):
            if not getattr(self, name).strip():
                raise ValueError(f"writer context field {name} is empty")

    def render(self) -> str:
        return WRITER_PROMPT.format(
            task=self.task_description.strip(),
            findings=render_knowledge(self.findings),
            reference_id=self.reference_id,
            reference_listing=self.reference_listing.rstrip("\n"),
            reference_analysis=self.reference_analysis,
            base_id=self.base_id,
            base_listing=self.base_listing.rstrip("\n"),
            base_analysis=self.base_analysis,
            description=self.plan.description,
            rubric=self.plan.rubric,
        )


@dataclass(frozen=True)
class KernelCandidate:
    source: str
    technique_report: str


def assemble_writer_context(
    decision: SelectionDecision,
    plan: ExperimentPlan,
    population: Population,
    knowledge: list[KnowledgeDoc],
    task_description: str,
) -> WriterContext:
    base = population.get(decision.basis_code)
    reference = population.get(decision.basis_reference)
    return WriterContext(
        task_description=task_description,
        findings=list(knowledge),
        base_id=base.id,  # type: ignore[arg-type]
        reference_id=reference.id,  # type: ignore[arg-type]
        base_listing=base.source,
        reference_listing=reference.source,
        base_analysis=population.one_step_analysis(base.id),  # type: ignore[arg-type]
        reference_analysis=population.one_step_analysis(reference.id),  # type: ignore[arg-type]
        plan=plan,
    )


_REPORT_HEADING = re.compile(r"^[ \t]*(?:#{1,6}[ \t]*)?(?:\*\*)?[ \t]*techniques?[ \t]+report[ \t]*:?[ \t]*(?:\*\*)?:?", re.I | re.M)


def parse_kernel_output(text: str) -> KernelCandidate:
    """Pick the largest fenced block as the kernel; the technique report is the prose.

    When a "Technique report" heading is present only the text after it is
    used, otherwise all prose outside code blocks.
    """
    blocks = [(body, span) for _, body, span in fenced_blocks(text) if body.strip()]
    if not blocks:
        raise ParseError("no fenced code block with kernel source found")
    # on equal size the later block wins: models echo snippets before the full file
    source, _ = max(reversed(blocks), key=lambda b: len(b[0].strip()))
    prose, last = [], 0
    for _, _, span in fenced_blocks(text):
        prose.append(text[last : span[0]])
        last = span[1]
    prose.append(text[last:])
    outside = "".join(prose)
    headings = list(_REPORT_HEADING.finditer(outside))
    report = outside[headings[-1].end() :] if headings else outside
    report = report.strip()
    if not report:
        raise ParseError("technique report is missing; add a '## Technique report' section after the code")
    return KernelCandidate(source=source if source.endswith("\n") else source + "\n", technique_report=report)


def write_kernel(context: WriterContext, gateway: LlmGateway, log_dir: Optional[Path] = None) -> KernelCandidate:
    return gateway.complete_structured("writer", context.render(), parse_kernel_output, log_dir=log_dir)

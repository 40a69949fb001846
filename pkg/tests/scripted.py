"""A deterministic stand-in for the LLM, driven only by prompt content.

The selector picks the two fastest rows of the table, the designer proposes
five plans that each add one unused marker token, and the writer copies the
Base listing and appends its plan's marker. Because replies depend on the
prompt alone, a resumed run sees exactly the replies an uninterrupted run
would.
"""

from __future__ import annotations

import re

from kernel_scientist.evaluation import markers_present
from kernel_scientist.llm import FunctionBackend, LlmGateway, LlmRole

MARKERS = {f"OPT_{i:02d}": round(0.97 - 0.001 * i, 6) for i in range(40)}

SEED_SOURCES = [
    "// seed 1: reference translation\nkernel_main();\n",
    "// seed 2: direct port\nkernel_main(); // OPT_38\n",
    "// seed 3: matrix cores\nkernel_main(); // OPT_39\n",
]

# (performance, innovation) for plan ordinals 1..5; the pick rule selects 1, 2, 3
PLAN_SHAPE = [((1, 5), 90), ((5, 50), 50), ((20, 30), 40), ((1, 10), 30), ((2, 12), 20)]

_ROW = re.compile(r"^(\d{5}) \| .*\| ([0-9.]+|-)$", re.M)
_BASE = re.compile(r"^# Base kernel (\d{5})\n.*?^```\n(.*?)\n^```", re.M | re.S)
_RUBRIC_MARKER = re.compile(r"Insert the marker (OPT_\d\d)")


def selector_reply(prompt: str) -> str:
    rows = [(float(score), rid) for rid, score in _ROW.findall(prompt) if score != "-"]
    rows.sort()
    base = rows[0][1]
    reference = rows[1][1] if len(rows) > 1 else base
    return (
        "Here is my decision.\n\n"
        f'basis_code: "{base}"\n'
        f'basis_reference: "{reference}"\n'
        "rationale: >\n"
        f'  "Run {base} has the lowest geometric mean; {reference} is the runner-up."\n'
    )


def base_listing(prompt: str) -> tuple[str, str]:
    m = _BASE.search(prompt)
    assert m, "prompt has no Base listing"
    return m.group(1), m.group(2)


def designer_reply(prompt: str, n_avenues: int = 10) -> str:
    _, source = base_listing(prompt)
    present = set(markers_present(source, MARKERS))
    unused = [t for t in MARKERS if t not in present][:5]
    lines = ["## Task 1: Optimization Avenues", ""]
    lines += [f"* **Avenue {i}:** idea number {i}" for i in range(1, n_avenues + 1)]
    lines += ["", "## Task 2: Experiments", "", "```yaml", "experiment:"]
    for token, ((lo, hi), innovation) in zip(unused, PLAN_SHAPE):
        lines += [
            "  - description: >",
            f'      "Apply optimisation {token}."',
            "    rubric: >",
            f'      "Insert the marker {token} at the end of the kernel."',
            f"    performance: [{lo}, {hi}]",
            f"    innovation: {innovation}",
        ]
    lines.append("```")
    return "\n".join(lines) + "\n"


def writer_reply(prompt: str, abandon: frozenset[tuple[str, str]] = frozenset()) -> str:
    """``abandon`` holds (base id, marker) pairs the writer never manages to produce."""
    base_id, source = base_listing(prompt)
    token = _RUBRIC_MARKER.search(prompt.split("# Experiment to implement", 1)[1]).group(1)
    if (base_id, token) in abandon:
        return "I could not work out how to implement this experiment."
    return f"```cpp\n{source}\n// {token}\n```\n\n## Technique report\nAppended {token} after the kernel body.\n"


class ScriptedScientist:
    def __init__(self, abandon=(), fail_designer=False, fail_selector=False):
        self.abandon = frozenset(abandon)
        self.fail_designer = fail_designer
        self.fail_selector = fail_selector
        self.calls: list[str] = []

    def __call__(self, role: str, prompt: str) -> str:
        self.calls.append(role)
        if role == "selector":
            return "no idea" if self.fail_selector else selector_reply(prompt)
        if role == "designer":
            return "garbage" if self.fail_designer else designer_reply(prompt)
        if role == "writer":
            return writer_reply(prompt, self.abandon)
        if role == "digester":
            return "Digested findings: use the matrix cores."
        raise AssertionError(role)


def roles(max_attempts: int = 3) -> dict[str, LlmRole]:
    return {name: LlmRole(name, f"model-{name}", 0.7, max_attempts) for name in ("selector", "designer", "writer", "digester")}


def scripted_gateway(responder, max_attempts: int = 3) -> LlmGateway:
    r = roles(max_attempts)
    return LlmGateway(FunctionBackend(responder, {v.model_id: k for k, v in r.items()}), r, backoff_s=0.0)

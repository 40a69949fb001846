"""Human-readable key-value documents (YAML) and atomic file writes."""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path
from typing import Any

import yaml


class _Dumper(yaml.SafeDumper):
    pass


def _str_representer(dumper: yaml.SafeDumper, value: str) -> yaml.ScalarNode:
    # block style keeps kernel listings and rubrics readable in diffs
    style = "|" if "\n" in value else None
    return dumper.represent_scalar("tag:yaml.org,2002:str", value, style=style)


_Dumper.add_representer(str, _str_representer)


def dump_document(data: Any) -> str:
    return yaml.dump(
        data,
        Dumper=_Dumper,
        sort_keys=False,
        allow_unicode=True,
        default_flow_style=False,
        width=100,
    )


def load_document(text: str) -> Any:
    return yaml.safe_load(text)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_FENCE_RE = re.compile(r"^[ \t]*(`{3,}|~{3,})[ \t]*([\w+#.-]*)[^\n]*\n(.*?)(?:^[ \t]*\1[ \t]*$|\Z)", re.M | re.S)


def fenced_blocks(text: str) -> list[tuple[str, str, tuple[int, int]]]:
    """Return (language, body, span) for every fenced block; an unclosed fence runs to end of text."""
    return [(m.group(2).lower(), m.group(3), m.span()) for m in _FENCE_RE.finditer(text)]


def clean_scalar(value: Any) -> str:
    """Normalise an LLM-emitted text field.

    Folded YAML blocks in model output often wrap the whole text in an extra
    pair of double quotes; those are dropped and runs of spaces collapsed.
    Line structure is kept.
    """
    text = str(value).strip()
    if len(text) >= 2 and text[0] == text[-1] == '"':
        text = text[1:-1].strip()
    lines = [" ".join(line.split()) for line in text.splitlines()]
    return "\n".join(line for line in lines if line)

"""Findings documents injected into designer and writer prompts.

Documents live under ``knowledge/``: one text file per document body and an
append-only ``index`` of JSON lines carrying id, title, origin and a
provenance note.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from .documents import write_atomic
from .errors import DuplicateIdError
from .llm import LlmGateway

DIGEST_PROMPT = """\
You are preparing reference notes for an engineer optimising a GPU kernel.

# Task the notes must serve
{task}

# Source material
{raw}

# Instructions
Summarise the source material into a concise findings document. Keep only
guidance that is relevant to the task above: hardware behaviour, instruction
or library usage, memory layout rules, pitfalls and any pseudocode worth
reusing. Drop everything else. Reply with the findings document only.
"""


@dataclass(frozen=True)
class KnowledgeDoc:
    doc_id: str
    title: str
    body: str
    origin: str
    source_note: str = ""

    def render(self) -> str:
        return f"### {self.title} [{self.doc_id}]\n{self.body.strip()}\n"


def slugify(text: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug[:60].rstrip("-") or "doc"


class KnowledgeBase:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._docs: list[KnowledgeDoc] = []
        if self.index_path.exists():
            for line in self.index_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    meta = json.loads(line)
                    body = (self.root / meta["doc_id"]).read_text(encoding="utf-8")
                    self._docs.append(KnowledgeDoc(body=body, **meta))

    @property
    def index_path(self) -> Path:
        return self.root / "index"

    def __contains__(self, doc_id: object) -> bool:
        return any(d.doc_id == doc_id for d in self._docs)

    def list_docs(self) -> list[KnowledgeDoc]:
        return list(self._docs)

    def get(self, doc_id: str) -> KnowledgeDoc:
        for doc in self._docs:
            if doc.doc_id == doc_id:
                return doc
        raise KeyError(doc_id)

    def _store(self, doc: KnowledgeDoc) -> KnowledgeDoc:
        if doc.doc_id in self or doc.doc_id == "index":
            raise DuplicateIdError(f"knowledge document {doc.doc_id!r} already exists")
        if not doc.body.strip():
            raise ValueError("knowledge document body is empty")
        write_atomic(self.root / doc.doc_id, doc.body)
        meta = {k: v for k, v in asdict(doc).items() if k != "body"}
        with self.index_path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
        self._docs.append(doc)
        return doc

    def _unique_id(self, base: str) -> str:
        candidate, n = base, 2
        while candidate in self or candidate == "index":
            candidate, n = f"{base}-{n}", n + 1
        return candidate

    def add_manual_doc(self, title: str, body: str, doc_id: Optional[str] = None, source_note: str = "") -> KnowledgeDoc:
        if not body.strip():
            raise ValueError("knowledge document body is empty")
        return self._store(KnowledgeDoc(doc_id or slugify(title), title, body, "manual", source_note))

    def digest_document(
        self,
        raw: str,
        task_description: str,
        gateway: LlmGateway,
        title: str = "digest",
        source_note: str = "",
    ) -> KnowledgeDoc:
        """Have the digester role condense ``raw`` into task-relevant findings."""
        if not raw.strip():
            raise ValueError("nothing to digest: raw document is empty")
        body = gateway.complete("digester", DIGEST_PROMPT.format(task=task_description.strip(), raw=raw.strip()))
        doc_id = self._unique_id(slugify(title))
        return self._store(KnowledgeDoc(doc_id, title, body.strip() + "\n", "digested", source_note))

    def snapshot(self, byte_budget: Optional[int] = None) -> list[KnowledgeDoc]:
        """Docs to inject for one generation, dropping the oldest beyond ``byte_budget``."""
        docs = self.list_docs()
        if byte_budget is None:
            return docs
        kept: list[KnowledgeDoc] = []
        used = 0
        for doc in reversed(docs):
            size = len(doc.render().encode("utf-8"))
            if used + size > byte_budget:
                break
            kept.append(doc)
            used += size
        return list(reversed(kept))


def render_knowledge(docs: list[KnowledgeDoc]) -> str:
    if not docs:
        return "(no external notes available)"
    return "\n".join(doc.render() for doc in docs)

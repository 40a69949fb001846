"""Provider-agnostic chat completion with per-role models, transcripts and repair/retry.

Every stage call is single-shot: the gateway sends one fully assembled prompt
and gets one text back. Backends implement :class:`ChatBackend`; the
OpenAI-compatible HTTP adapter and the deterministic mocks are the shipped
implementations.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, TypeVar

import httpx

from .documents import dump_document, write_atomic
from .errors import ParseError, ParseExhaustedError, RoleUnconfiguredError, TransportError

logger = logging.getLogger(__name__)

T = TypeVar("T")

ROLE_NAMES = ("selector", "designer", "writer", "digester")

REPAIR_TEMPLATE = (
    "\n\n---\nYour previous output failed to parse because: {error}\n"
    "Reply again with the complete answer in exactly the requested format."
)


@dataclass(frozen=True)
class LlmRole:
    name: str
    model_id: str
    temperature: float = 0.7
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if self.name not in ROLE_NAMES:
            raise ValueError(f"unknown role {self.name!r}; expected one of {ROLE_NAMES}")
        if not self.model_id:
            raise ValueError(f"role {self.name}: model_id is empty")
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"role {self.name}: temperature {self.temperature} outside [0, 2]")
        if self.max_attempts < 1:
            raise ValueError(f"role {self.name}: max_attempts must be >= 1")


@dataclass(frozen=True)
class Transcript:
    role: str
    request: str
    response: str
    attempt: int
    timestamp: str
    error: Optional[str] = None


class ChatBackend(Protocol):
    def chat(self, model: str, prompt: str, temperature: float) -> str:
        """Return the model's reply text; raise TransportError on failure."""
        ...


class ScriptedBackend:
    """Replays an ordered list of responses, one per request.

    A response that is an Exception instance is raised instead of returned,
    which scripts transport failures. Running past the end of the script is a
    TransportError so a miscounted test fails loudly.
    """

    def __init__(self, responses: Iterable[str | Exception]):
        self._responses = deque(responses)
        self._lock = threading.Lock()
        self.requests: list[tuple[str, str]] = []

    def chat(self, model: str, prompt: str, temperature: float) -> str:
        with self._lock:
            self.requests.append((model, prompt))
            if not self._responses:
                raise TransportError("scripted backend exhausted")
            item = self._responses.popleft()
        if isinstance(item, Exception):
            raise item
        return item

    @property
    def remaining(self) -> int:
        return len(self._responses)


class FunctionBackend:
    """Answers with ``responder(role, prompt)``; the role is looked up from the model id."""

    def __init__(self, responder: Callable[[str, str], str], model_roles: dict[str, str]):
        self.responder = responder
        self.model_roles = model_roles

    def chat(self, model: str, prompt: str, temperature: float) -> str:
        return self.responder(self.model_roles.get(model, model), prompt)


class OpenAICompatibleBackend:
    """POSTs to ``{endpoint}/chat/completions`` with a bearer key taken from the environment."""

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "KERNEL_SCIENTIST_API_KEY",
        timeout_s: float = 600.0,
        client: Optional[httpx.Client] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout_s)

    def chat(self, model: str, prompt: str, temperature: float) -> str:
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = self._client.post(f"{self.endpoint}/chat/completions", json=payload, headers=headers)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise TransportError(f"chat request failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc


@dataclass
class LlmGateway:
    backend: ChatBackend
    roles: dict[str, LlmRole]
    backoff_s: float = 1.0
    transcripts: list[Transcript] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def role(self, name: str) -> LlmRole:
        try:
            return self.roles[name]
        except KeyError:
            raise RoleUnconfiguredError(f"role {name!r} is not configured") from None

    def complete(self, role: str, prompt: str, *, log_dir: Optional[Path] = None, attempt: int = 1) -> str:
        """Send ``prompt`` for ``role`` and return the raw reply.

        Transport failures are retried with exponential backoff up to the
        role's ``max_attempts`` requests in total. Each request, failed or not,
        leaves one transcript.
        """
        spec = self.role(role)
        if not prompt.strip():
            raise ValueError("prompt is empty")
        delay = self.backoff_s
        for n in range(1, spec.max_attempts + 1):
            try:
                text = self.backend.chat(spec.model_id, prompt, spec.temperature)
            except TransportError as exc:
                self._record(Transcript(role, prompt, "", attempt, _stamp(), error=str(exc)), log_dir)
                if n == spec.max_attempts:
                    raise
                logger.warning("%s request failed (%s); retrying in %.1fs", role, exc, delay)
                time.sleep(delay)
                delay *= 2
                continue
            self._record(Transcript(role, prompt, text, attempt, _stamp()), log_dir)
            return text
        raise AssertionError("unreachable")

    def complete_structured(
        self,
        role: str,
        prompt: str,
        parser: Callable[[str], T],
        *,
        log_dir: Optional[Path] = None,
    ) -> T:
        """Call :meth:`complete` until ``parser`` accepts the reply.

        ``parser`` raises ParseError with a description of what is wrong; that
        description is appended to the original prompt for the next attempt.
        """
        spec = self.role(role)
        request = prompt
        last_error = ""
        for attempt in range(1, spec.max_attempts + 1):
            text = self.complete(role, request, log_dir=log_dir, attempt=attempt)
            try:
                return parser(text)
            except ParseError as exc:
                last_error = str(exc)
                logger.info("%s attempt %d unparseable: %s", role, attempt, last_error)
                request = prompt + REPAIR_TEMPLATE.format(error=last_error)
        raise ParseExhaustedError(role, spec.max_attempts, last_error)

    def _record(self, transcript: Transcript, log_dir: Optional[Path]) -> None:
        with self._lock:
            self.transcripts.append(transcript)
            if log_dir is None:
                return
            n = sum(1 for _ in log_dir.glob("transcript-*")) + 1 if log_dir.exists() else 1
            doc = {
                "role": transcript.role,
                "attempt": transcript.attempt,
                "timestamp": transcript.timestamp,
                "error": transcript.error,
                "request": transcript.request,
                "response": transcript.response,
            }
            write_atomic(log_dir / f"transcript-{n:03d}", dump_document(doc))


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")

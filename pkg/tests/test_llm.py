from __future__ import annotations

import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kernel_scientist.errors import ParseError, ParseExhaustedError, RoleUnconfiguredError, TransportError
from kernel_scientist.llm import LlmGateway, LlmRole, OpenAICompatibleBackend, ScriptedBackend
from kernel_scientist.documents import load_document

from conftest import fixture_text
from scripted import roles


def gateway(responses, max_attempts=3):
    return LlmGateway(ScriptedBackend(responses), roles(max_attempts), backoff_s=0.0)


def strict_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"{text.strip()!r} is not an integer") from None


class TestComplete:
    def test_returns_fixture_verbatim(self):
        sample = fixture_text("selection_sample_1.txt")
        gw = gateway([sample])
        assert gw.complete("selector", "pick parents") == sample
        assert len(gw.transcripts) == 1
        t = gw.transcripts[0]
        assert (t.role, t.request, t.response, t.attempt) == ("selector", "pick parents", sample, 1)

    def test_unconfigured_role(self):
        with pytest.raises(RoleUnconfiguredError):
            gateway(["x"]).complete("oracle", "hello")

    def test_transport_exhaustion(self):
        gw = gateway([TransportError("boom")] * 3, max_attempts=3)
        with pytest.raises(TransportError):
            gw.complete("designer", "hello")
        assert len(gw.transcripts) == 3
        assert all(t.error for t in gw.transcripts)

    def test_transport_recovers(self):
        gw = gateway([TransportError("boom"), "fine"], max_attempts=3)
        assert gw.complete("designer", "hello") == "fine"

    def test_backoff_doubles(self, monkeypatch):
        sleeps = []
        monkeypatch.setattr("kernel_scientist.llm.time.sleep", sleeps.append)
        gw = LlmGateway(ScriptedBackend([TransportError("a"), TransportError("b"), "ok"]), roles(3), backoff_s=0.5)
        gw.complete("writer", "p")
        assert sleeps == [0.5, 1.0]

    def test_empty_prompt(self):
        with pytest.raises(ValueError):
            gateway(["x"]).complete("writer", "   ")

    def test_role_validation(self):
        with pytest.raises(ValueError):
            LlmRole("selector", "m", temperature=2.5)
        with pytest.raises(ValueError):
            LlmRole("oracle", "m")
        with pytest.raises(ValueError):
            LlmRole("writer", "m", max_attempts=0)


class TestCompleteStructured:
    def test_first_try(self):
        gw = gateway(["42"])
        assert gw.complete_structured("designer", "n?", strict_int) == 42
        assert [t.attempt for t in gw.transcripts] == [1]

    def test_repair_on_second_attempt(self):
        backend = ScriptedBackend(["forty-two", "42"])
        gw = LlmGateway(backend, roles(3), backoff_s=0.0)
        assert gw.complete_structured("designer", "n?", strict_int) == 42
        assert [t.attempt for t in gw.transcripts] == [1, 2]
        repair_prompt = backend.requests[1][1]
        assert repair_prompt.startswith("n?")
        assert "failed to parse because: 'forty-two' is not an integer" in repair_prompt

    def test_exhausted(self):
        gw = gateway(["a", "b", "c"], max_attempts=3)
        with pytest.raises(ParseExhaustedError) as info:
            gw.complete_structured("designer", "n?", strict_int)
        assert info.value.attempts == 3
        assert "'c' is not an integer" in info.value.last_error
        assert len(gw.transcripts) == 3

    @given(st.lists(st.sampled_from(["junk", "7"]), min_size=1, max_size=8), st.integers(1, 4))
    def test_never_returns_unparsed(self, script, max_attempts):
        gw = gateway(list(script), max_attempts=max_attempts)
        try:
            value = gw.complete_structured("writer", "n?", strict_int)
        except ParseExhaustedError:
            assert "7" not in script[:max_attempts]
            assert len(gw.transcripts) == max_attempts
        except TransportError:
            # script ran out before the attempt budget did
            assert len(script) < max_attempts and "7" not in script
        else:
            assert value == 7
            assert len(gw.transcripts) == script.index("7") + 1

    def test_scripted_replay_is_deterministic(self):
        script = ["x", "1", "2", "y", "z", "3"]

        def run():
            gw = gateway(list(script))
            out = [gw.complete_structured("writer", f"q{i}", strict_int) for i in range(3)]
            return out, [(t.request, t.response, t.attempt) for t in gw.transcripts]

        assert run() == run()
        assert run()[0] == [1, 2, 3]


def test_transcripts_persisted_and_concurrent(tmp_path):
    n = 30
    gw = gateway([str(i) for i in range(n)])
    dirs = [tmp_path / f"writer-{i % 3}" for i in range(n)]
    threads = [threading.Thread(target=gw.complete, args=("writer", f"p{i}"), kwargs={"log_dir": dirs[i]}) for i in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(gw.transcripts) == n
    files = sorted(tmp_path.rglob("transcript-*"))
    assert len(files) == n
    doc = load_document(files[0].read_text())
    assert set(doc) >= {"role", "request", "response", "attempt", "timestamp"}


class TestOpenAICompatibleBackend:
    def test_wire_format(self, monkeypatch):
        monkeypatch.setenv("TEST_KEY", "sekret")
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["url"] = str(request.url)
            seen["auth"] = request.headers.get("authorization")
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": "hi"}}]})

        backend = OpenAICompatibleBackend(
            "https://llm.example/v1/", api_key_env="TEST_KEY", client=httpx.Client(transport=httpx.MockTransport(handler))
        )
        assert backend.chat("fast-model", "hello", 0.3) == "hi"
        assert seen["url"] == "https://llm.example/v1/chat/completions"
        assert seen["auth"] == "Bearer sekret"
        assert seen["body"] == {"model": "fast-model", "temperature": 0.3, "messages": [{"role": "user", "content": "hello"}]}

    @pytest.mark.parametrize(
        "response",
        [httpx.Response(500, text="down"), httpx.Response(200, json={"unexpected": True})],
    )
    def test_failures_become_transport_errors(self, response):
        backend = OpenAICompatibleBackend(
            "https://llm.example/v1", client=httpx.Client(transport=httpx.MockTransport(lambda r: response))
        )
        with pytest.raises(TransportError):
            backend.chat("m", "p", 0.0)

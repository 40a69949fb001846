from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from kernel_scientist.errors import EmptyPopulationError, ParseError, ParseExhaustedError
from kernel_scientist.llm import LlmGateway, ScriptedBackend
from kernel_scientist.models import BenchmarkEntry, BenchmarkReport, KernelRecord, Status
from kernel_scientist.population import Population, PopulationSummary
from kernel_scientist.selector import build_selector_prompt, parse_selection, select_parents

from conftest import SHAPES, fixture_text
from scripted import roles
from test_population import PLAN

SAMPLES = {
    1: ("00052", "00046", "Run 00052 is selected as the basis code due to its consistently lowest average"),
    2: ("00089", "00087", "Run 00089 is selected as the basis code due to its superior overall performance,"),
    3: ("00097", "00091", "Run 00097 is chosen as the basis for new experiments due to its consistently"),
}


def decision_text(base, ref, rationale="Because."):
    return f'basis_code: "{base}"\nbasis_reference: "{ref}"\nrationale: >\n  "{rationale}"\n'


def gateway(responses, max_attempts=3):
    backend = ScriptedBackend(responses)
    return LlmGateway(backend, roles(max_attempts), backoff_s=0.0), backend


def add(pop, status=Status.SEED, t=100.0, parents=None):
    bench = BenchmarkReport([BenchmarkEntry(s, t) for s in SHAPES]) if status in (Status.SEED, Status.EVALUATED) else None
    base, ref = parents or (None, None)
    return pop.add_record(
        KernelRecord(
            source="k\n",
            base_parent_id=base,
            reference_parent_id=ref,
            experiment=PLAN if base else None,
            benchmark=bench,
            status=status,
        )
    )


@pytest.fixture
def pop(tmp_path):
    return Population(tmp_path / "population", SHAPES)


class TestParseSelection:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_sample_replies(self, n):
        base, ref, opening = SAMPLES[n]
        d = parse_selection(fixture_text(f"selection_sample_{n}.txt"))
        assert (d.basis_code, d.basis_reference) == (base, ref)
        assert d.rationale.startswith(opening)
        assert not d.rationale.startswith('"')

    def test_tolerates_prose_and_fences(self):
        text = "Sure! Here you go:\n\n```yaml\n" + fixture_text("selection_sample_2.txt") + "```\nHope that helps."
        d = parse_selection(text)
        assert (d.basis_code, d.basis_reference) == ("00089", "00087")

    def test_tolerates_leading_prose_without_fence(self):
        d = parse_selection("After reviewing the table:\n" + decision_text("00003", "00001") + "\nThanks.")
        assert (d.basis_code, d.basis_reference) == ("00003", "00001")

    def test_unquoted_ids_keep_leading_zeros(self):
        d = parse_selection("basis_code: 00010\nbasis_reference: 00007\nrationale: fine\n")
        assert (d.basis_code, d.basis_reference) == ("00010", "00007")

    def test_missing_reference(self):
        with pytest.raises(ParseError, match="basis_reference"):
            parse_selection('basis_code: "00052"\nrationale: >\n  "x"\n')

    @pytest.mark.parametrize("text", ["", "no document here", "basis_code: [unclosed"])
    def test_garbage(self, text):
        with pytest.raises(ParseError):
            parse_selection(text)


class TestPrompt:
    def test_contains_all_ids_and_shape_columns(self, pop):
        add(pop)
        add(pop, t=90.0)
        add(pop, status=Status.EVALUATED, t=80.0, parents=("00002", "00001"))
        prompt = build_selector_prompt(pop.summarize())
        for rid in ("00001", "00002", "00003"):
            assert rid in prompt
        for s in SHAPES:
            assert s.label in prompt
        assert "basis_code" in prompt and "basis_reference" in prompt and "rationale" in prompt

    def test_failure_marker_shown(self, pop):
        add(pop)
        add(pop, status=Status.BUILD_FAILED, parents=("00001", "00001"))
        assert "<build_failed>" in build_selector_prompt(pop.summarize())

    def test_empty_summary(self):
        with pytest.raises(EmptyPopulationError):
            build_selector_prompt(PopulationSummary(rows=[], shapes=SHAPES))


class TestSelectParents:
    def test_sample_2_over_matching_population(self, pop):
        while len(pop) < 89:
            add(pop, t=100.0 + len(pop))
        gw, _ = gateway([fixture_text("selection_sample_2.txt")])
        d = select_parents(pop, gw)
        assert (d.basis_code, d.basis_reference) == ("00089", "00087")
        assert not d.degenerate

    def test_nonexistent_id_is_repaired(self, pop):
        add(pop)
        add(pop)
        gw, backend = gateway([decision_text("00077", "00001"), decision_text("00002", "00001")])
        d = select_parents(pop, gw)
        assert (d.basis_code, d.basis_reference) == ("00002", "00001")
        assert [t.attempt for t in gw.transcripts] == [1, 2]
        assert "'00077' is not an id in the population table" in backend.requests[1][1]

    def test_failed_record_is_not_eligible(self, pop):
        add(pop)
        add(pop)
        add(pop, status=Status.INCORRECT, parents=("00001", "00002"))
        gw, backend = gateway([decision_text("00003", "00001"), decision_text("00001", "00002")])
        d = select_parents(pop, gw)
        assert d.basis_code == "00001"
        assert "status incorrect" in backend.requests[1][1]

    def test_same_ids_rejected_when_alternatives_exist(self, pop):
        add(pop)
        add(pop)
        gw, _ = gateway([decision_text("00001", "00001")] * 3)
        with pytest.raises(ParseExhaustedError, match="must be different"):
            select_parents(pop, gw)

    def test_single_record_bootstrap_is_degenerate(self, pop):
        add(pop)
        gw, _ = gateway([decision_text("00001", "00001")])
        d = select_parents(pop, gw)
        assert d.basis_code == d.basis_reference == "00001"
        assert d.degenerate

    def test_no_eligible_records(self, pop):
        add(pop, status=Status.BUILD_FAILED)
        gw, _ = gateway([])
        with pytest.raises(EmptyPopulationError):
            select_parents(pop, gw)

    @settings(max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        statuses=st.lists(st.sampled_from([Status.SEED, Status.BUILD_FAILED, Status.INCORRECT]), min_size=1, max_size=6),
        picks=st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=4),
    )
    def test_never_returns_invalid_decision(self, tmp_path_factory, statuses, picks):
        p = Population(tmp_path_factory.mktemp("sel"), SHAPES)
        for s in statuses:
            add(p, status=s)
        script = [decision_text(f"{a:05d}", f"{b:05d}") for a, b in picks]
        gw, _ = gateway(script, max_attempts=len(script))
        eligible = {r.id for r in p.eligible()}
        try:
            d = select_parents(p, gw)
        except EmptyPopulationError:
            assert not eligible
            return
        except ParseExhaustedError:
            return
        assert d.basis_code in eligible and d.basis_reference in eligible
        assert d.basis_code != d.basis_reference or len(eligible) == 1
        prompt = build_selector_prompt(p.summarize())
        assert all(rid in prompt for rid in eligible)

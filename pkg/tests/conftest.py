from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kernel_scientist.config import RunConfig  # noqa: E402
from kernel_scientist.evaluation import EvaluatorConfig  # noqa: E402
from kernel_scientist.models import BenchmarkShape  # noqa: E402

import scripted  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

SHAPES = [
    BenchmarkShape(1024, 1536, 7168),
    BenchmarkShape(1024, 3072, 1536),
    BenchmarkShape(1024, 576, 7168),
    BenchmarkShape(1024, 7168, 256),
    BenchmarkShape(1024, 7168, 2048),
    BenchmarkShape(6144, 512, 4096),
]


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


@pytest.fixture
def shapes():
    return list(SHAPES)


@pytest.fixture
def mock_evaluator():
    return EvaluatorConfig(kind="mock", shapes=list(SHAPES), marker_factors=dict(scripted.MARKERS))


@pytest.fixture
def run_config(mock_evaluator):
    return RunConfig(
        roles=scripted.roles(),
        evaluator=mock_evaluator,
        task_description_text="Write a fast FP8 block-scaled GEMM.\n\nBaseline:\n```\nC = A @ B\n```\n",
    )

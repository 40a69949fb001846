"""LLM-driven evolutionary search over GPU kernel variants."""

from .designer import DesignOutput, pick_experiments
from .evaluation import EvalOutcome, EvaluatorConfig, evaluate, mock_timing
from .knowledge import KnowledgeBase, KnowledgeDoc
from .llm import LlmGateway, LlmRole, ScriptedBackend
from .models import BenchmarkEntry, BenchmarkReport, BenchmarkShape, ExperimentPlan, KernelRecord, Status
from .orchestrator import GenerationLog, Orchestrator
from .population import Population
from .selector import SelectionDecision

__version__ = "0.1.0"

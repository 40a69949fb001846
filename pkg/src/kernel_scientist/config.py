"""Run configuration, loaded from a YAML file and validated before anything runs.

Example::

    task_description: task.md
    seeds: [seeds/reference.hip, seeds/translated.hip, seeds/matrix_core.hip]
    context_byte_budget: 200000
    llm:
      endpoint: https://example.invalid/v1
      api_key_env: KERNEL_SCIENTIST_API_KEY
      roles:
        selector: {model: fast-model, temperature: 0.7}
        designer: {model: strong-model, temperature: 1.0}
        writer: {model: strong-model, temperature: 0.7}
        digester: {model: fast-model, temperature: 0.3}
    evaluator:
      kind: external_command
      command: ./submit.sh {source_path} {shapes_path} {result_path}
      timeout_s: 600
      shapes: [[6144, 512, 4096], ...]

Relative paths are resolved against the config file's directory. The API key
itself is never read from the file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError
from .evaluation import EvaluatorConfig
from .llm import ROLE_NAMES, LlmRole
from .models import BenchmarkShape

DEFAULT_API_KEY_ENV = "KERNEL_SCIENTIST_API_KEY"


@dataclass
class RunConfig:
    roles: dict[str, LlmRole]
    evaluator: EvaluatorConfig
    task_description_path: Optional[Path] = None
    seed_paths: list[Path] = field(default_factory=list)
    endpoint: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    backoff_s: float = 1.0
    max_generations: Optional[int] = None
    context_byte_budget: Optional[int] = None
    task_description_text: Optional[str] = None

    @property
    def shapes(self) -> list[BenchmarkShape]:
        return self.evaluator.shapes

    def task_description(self) -> str:
        if self.task_description_text is not None:
            return self.task_description_text
        if self.task_description_path is None:
            raise ConfigError("no task_description configured")
        try:
            return self.task_description_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read task description: {exc}") from exc


def _require(mapping: dict, key: str, where: str) -> Any:
    if key not in mapping or mapping[key] in (None, ""):
        raise ConfigError(f"{where}: missing required field {key!r}")
    return mapping[key]


def parse_shapes(raw: Any) -> list[BenchmarkShape]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("evaluator.shapes must be a nonempty list of [m, k, n]")
    shapes = []
    for item in raw:
        if isinstance(item, dict):
            item = [item.get("m"), item.get("k"), item.get("n")]
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise ConfigError(f"bad shape {item!r}; expected [m, k, n]")
        try:
            shapes.append(BenchmarkShape(*item))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape {item!r}: {exc}") from exc
    return shapes


def config_from_dict(data: dict, base_dir: Path | str = ".") -> RunConfig:
    base_dir = Path(base_dir)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")

    llm = _require(data, "llm", "config")
    raw_roles = _require(llm, "roles", "llm")
    roles = {}
    for name in ROLE_NAMES:
        spec = _require(raw_roles, name, "llm.roles")
        if isinstance(spec, str):
            spec = {"model": spec}
        try:
            roles[name] = LlmRole(
                name=name,
                model_id=str(_require(spec, "model", f"llm.roles.{name}")),
                temperature=float(spec.get("temperature", 0.7)),
                max_attempts=int(spec.get("max_attempts", 3)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"llm.roles.{name}: {exc}") from exc
    unknown = set(raw_roles) - set(ROLE_NAMES)
    if unknown:
        raise ConfigError(f"llm.roles: unknown role(s) {sorted(unknown)}")

    ev = _require(data, "evaluator", "config")
    try:
        evaluator = EvaluatorConfig(
            kind=str(_require(ev, "kind", "evaluator")),
            shapes=parse_shapes(_require(ev, "shapes", "evaluator")),
            command_template=str(ev.get("command", "")),
            timeout_s=float(ev.get("timeout_s", 600.0)),
            marker_factors={str(k): float(v) for k, v in (ev.get("markers") or {}).items()},
            incorrect_marker=str(ev.get("incorrect_marker", "BUG")),
            build_fail_marker=str(ev.get("build_fail_marker", "BUILD_FAIL")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"evaluator: {exc}") from exc

    task_path = data.get("task_description")
    max_generations = data.get("max_generations")
    budget = data.get("context_byte_budget")
    for name, value in (("max_generations", max_generations), ("context_byte_budget", budget)):
        if value is not None and (not isinstance(value, int) or value < 0):
            raise ConfigError(f"{name} must be a nonnegative integer")

    return RunConfig(
        roles=roles,
        evaluator=evaluator,
        task_description_path=base_dir / task_path if task_path else None,
        seed_paths=[base_dir / p for p in data.get("seeds") or []],
        endpoint=str(llm.get("endpoint", "")),
        api_key_env=str(llm.get("api_key_env", DEFAULT_API_KEY_ENV)),
        backoff_s=float(llm.get("backoff_s", 1.0)),
        max_generations=max_generations,
        context_byte_budget=budget,
    )


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    config = config_from_dict(data, path.parent)
    if config.task_description_path is not None and not config.task_description_path.is_file():
        raise ConfigError(f"task_description file not found: {config.task_description_path}")
    return config

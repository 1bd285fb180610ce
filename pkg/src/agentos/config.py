"""Run configuration shared by the CLI, the service, and tests.

A config file (JSON always; TOML on Python 3.11+) mirrors CLI flags;
environment variables override planner connectivity settings.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

ENV_PREFIX = "AGENTOS_"
_ENV_KEYS = {
    "AGENTOS_PLANNER_ENDPOINT": "planner_endpoint",
    "AGENTOS_PLANNER_MODEL": "planner_model",
    "AGENTOS_PLANNER_KEY": "planner_api_key",
}


@dataclass(frozen=True)
class RunConfig:
    catalog_dir: str | None = None
    planner_backend: str = "scripted"  # scripted | http
    planner_fixture: str | None = None
    planner_endpoint: str | None = None
    planner_model: str = ""
    planner_api_key: str | None = None
    planner_timeout: float = 30.0
    mode: str = "speculative"  # single | speculative
    max_batch: int = 5
    max_steps: int = 30
    auto_approve: bool = False
    knowledge_dir: str | None = None
    doc_budget: int = 1
    experience_budget: int = 3
    risk_rules: str | None = None
    api_manifest: str | None = None
    vision: str = "fixture"  # fixture | http | none
    vision_endpoint: str | None = None
    vision_jitter: int = 0
    vision_confidence_floor: float = 0.0
    dedup_vision_overlaps: bool = False
    evaluator: str = "rules"  # rules | judge

    @property
    def max_k(self) -> int:
        return 1 if self.mode == "single" else self.max_batch

    def with_env_overrides(self) -> "RunConfig":
        updates = {}
        for env_key, field_name in _ENV_KEYS.items():
            value = os.environ.get(env_key)
            if value:
                updates[field_name] = value
        return replace(self, **updates) if updates else self


def load_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError as exc:
            raise ValueError("TOML config files need Python 3.11+; use JSON instead") from exc
        data = tomllib.loads(path.read_text())
    else:
        data = json.loads(path.read_text())
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def build_config(file_path: str | Path | None = None, **overrides: Any) -> RunConfig:
    data: dict[str, Any] = {}
    if file_path is not None:
        data.update(load_config_file(file_path))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data).with_env_overrides()

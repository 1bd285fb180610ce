"""Risk screening for planned actions.

Rules are data, loaded from JSON::

    [{"id": "no-deletes",
      "match": {"operation": "api_call", "api_pattern": "delete_*",
                "label_pattern": "*Remove*", "payload_pattern": "rm -rf*"}}]

Within one rule all given match fields must hold (glob patterns via
fnmatch); a ruleset flags an action if any rule matches. APIs registered
with risk_tag=true always flag, independent of the ruleset.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fnmatch import fnmatchcase
from pathlib import Path
from typing import Any

from .domain import Observation, Operation, PlannedAction
from .errors import MalformedRule
from .puppeteer import ApiRegistry

_MATCH_FIELDS = {"operation", "api_pattern", "label_pattern", "payload_pattern"}
RISK_TAG_RULE = "api-risk-tag"


@dataclass(frozen=True)
class RiskRule:
    id: str
    match: dict[str, Any]

    def __post_init__(self) -> None:
        if not self.match:
            raise MalformedRule(f"rule {self.id!r} has an empty match block")
        unknown = set(self.match) - _MATCH_FIELDS
        if unknown:
            raise MalformedRule(f"rule {self.id!r} has unknown match fields {sorted(unknown)}")
        op = self.match.get("operation")
        if op is not None and op not in {o.value for o in Operation}:
            raise MalformedRule(f"rule {self.id!r} matches unknown operation {op!r}")

    def matches(self, action: PlannedAction, target_label: str | None) -> bool:
        if "operation" in self.match and action.operation.value != self.match["operation"]:
            return False
        if "api_pattern" in self.match:
            api = action.api_name
            if api is None or not fnmatchcase(api, self.match["api_pattern"]):
                return False
        if "label_pattern" in self.match:
            if target_label is None or not fnmatchcase(target_label, self.match["label_pattern"]):
                return False
        if "payload_pattern" in self.match:
            if not _payload_matches(action.payload, self.match["payload_pattern"]):
                return False
        return True


def _payload_matches(payload: Any, pattern: str) -> bool:
    if isinstance(payload, str):
        return fnmatchcase(payload, pattern)
    if isinstance(payload, dict):
        return any(_payload_matches(v, pattern) for v in payload.values())
    if isinstance(payload, list):
        return any(_payload_matches(v, pattern) for v in payload)
    return False


def load_rules(source: str | Path | list[dict[str, Any]]) -> list[RiskRule]:
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text())
    else:
        data = source
    rules = []
    for item in data:
        try:
            rules.append(RiskRule(id=item["id"], match=dict(item["match"])))
        except MalformedRule:
            raise
        except (KeyError, TypeError) as exc:
            raise MalformedRule(f"rule entry {item!r} is malformed: {exc}") from exc
    return rules


@dataclass(frozen=True)
class ScreenResult:
    risky: bool
    matched_rule: str | None

    def to_json(self) -> dict[str, Any]:
        return {"risky": self.risky, "matched_rule": self.matched_rule}


def screen(
    action: PlannedAction,
    rules: list[RiskRule],
    context: Observation | None = None,
    registry: ApiRegistry | None = None,
) -> ScreenResult:
    """Pure risk check for one action. The observation supplies target labels
    for label patterns; the registry supplies per-API risk tags."""
    if action.operation is Operation.API_CALL and registry is not None:
        spec = registry.find(context.app_id if context else None, action.api_name)
        if spec is not None and spec.risk_tag:
            return ScreenResult(True, RISK_TAG_RULE)

    target_label: str | None = None
    if action.target and context is not None:
        control = context.find(action.target)
        if control is not None:
            target_label = control.label

    for rule in rules:
        if rule.matches(action, target_label):
            return ScreenResult(True, rule.id)
    return ScreenResult(False, None)

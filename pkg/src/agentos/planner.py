"""Planner abstraction: prompt assembly, structured-output parsing, and two
backends.

The scripted backend is a pure function of its inputs' canonical form,
built for deterministic CI. Its fixture maps (role, trigger key) to canned
responses::

    {"host": {"export the sheet as csv": { ...host output... }},
     "app":  {"save the sheet as csv": [ {...}, {...} ]},
     "judge": {"export the sheet as csv": { ...evaluation... }}}

The trigger key is the request (host/judge) or the subtask description
(app). An app entry may be a list: it is indexed by the number of prior
outputs in the agent's history window, saturating at the last element, so
"remaining plan" sequences behave sensibly in both single-action and
speculative modes. String leaves may embed ``{{path.to.value}}``
placeholders resolved against the planner inputs (for example
``{{blackboard.last_result.payload.total}}``), which is how scripted flows
move data between applications. An entry of the form
``{"__raw__": "...", "__repaired__": {...}}`` returns unparseable text
first and the repaired object on the retry, exercising the repair path.

The HTTP backend targets any chat-completion-compatible endpoint; the
model id, endpoint, and key come from config or environment. Malformed
output gets exactly one repair attempt (re-prompt with the parse error)
before PlannerOutputMalformed surfaces.
"""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, Protocol

import httpx

from .appagent import AppAgentOutput, parse_app_output
from .domain import Observation, canonical_json
from .errors import BackendUnavailable, PlannerOutputMalformed
from .hostagent import HostOutput, parse_host_output

_PLACEHOLDER_RE = re.compile(r"\{\{([a-zA-Z0-9_.]+)\}\}")


class PlannerBackend(Protocol):
    def complete(self, role: str, inputs: dict[str, Any]) -> Any: ...


def _resolve_path(inputs: dict[str, Any], path: str) -> Any:
    node: Any = inputs
    for part in path.split("."):
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.lstrip("-").isdigit():
            index = int(part)
            if -len(node) <= index < len(node):
                node = node[index]
            else:
                return None
        else:
            return None
    return node


def resolve_placeholders(value: Any, inputs: dict[str, Any]) -> Any:
    """Replace {{path}} placeholders in string leaves with values resolved
    from the planner inputs. Unresolvable paths are left verbatim."""
    if isinstance(value, dict):
        return {k: resolve_placeholders(v, inputs) for k, v in value.items()}
    if isinstance(value, list):
        return [resolve_placeholders(v, inputs) for v in value]
    if isinstance(value, str):
        full = _PLACEHOLDER_RE.fullmatch(value)
        if full:
            resolved = _resolve_path(inputs, full.group(1))
            return value if resolved is None else resolved

        def substitute(match: re.Match) -> str:
            resolved = _resolve_path(inputs, match.group(1))
            return match.group(0) if resolved is None else str(resolved)

        return _PLACEHOLDER_RE.sub(substitute, value)
    return value


class ScriptedBackend:
    def __init__(self, fixture: dict[str, Any] | str | Path):
        if isinstance(fixture, (str, Path)):
            fixture = json.loads(Path(fixture).read_text())
        self.fixture = fixture

    def complete(self, role: str, inputs: dict[str, Any]) -> Any:
        table = self.fixture.get(role) or {}
        key = inputs.get("trigger_key", "")
        entry = table.get(key, table.get("__default__"))
        if entry is None:
            raise BackendUnavailable(
                f"scripted fixture has no {role!r} entry for {key!r}"
            )
        if isinstance(entry, list):
            index = min(len(inputs.get("history") or ()), len(entry) - 1)
            entry = entry[index]
        if isinstance(entry, dict) and "__raw__" in entry:
            if not inputs.get("repair_error") or "__repaired__" not in entry:
                return entry["__raw__"]
            entry = entry["__repaired__"]
        return resolve_placeholders(entry, inputs)


class HttpBackend:
    """Chat-completion client. Sends the assembled prompt as messages and
    expects the assistant content to be the strict-JSON contract."""

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        api_key: str | None = None,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.client = client or httpx.Client(timeout=timeout)

    def complete(self, role: str, inputs: dict[str, Any]) -> Any:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": _SYSTEM_PROMPTS[role]},
                {"role": "user", "content": render_user_prompt(role, inputs)},
            ],
        }
        try:
            response = self.client.post(self.endpoint, json=body, headers=headers)
            response.raise_for_status()
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(f"planner backend failed: {exc}") from exc


_SYSTEM_PROMPTS = {
    "host": (
        "You orchestrate a desktop automation runtime. Decompose the user "
        "request into a dependency-ordered subtask plan over the available "
        "applications. Reply with ONE JSON object: {\"subtask_plan\": "
        "{\"origin_request\", \"subtasks\": [{\"description\", \"target_app\", "
        "\"depends_on\"}]}, \"shell_commands\": [], \"assigned_app\": "
        "{\"app_id\", \"instance\"}|null, \"agent_message\": str, "
        "\"user_prompt\": str|null, \"status\": CONTINUE|ASSIGN|PENDING|FINISH|FAIL}. "
        "Use PENDING with a user_prompt when the request is ambiguous."
    ),
    "app": (
        "You drive one desktop application. Controls are listed with "
        "set-of-mark labels; registered APIs with their schemas. Plan up to "
        "max_k next actions as ONE JSON object: {\"batch\": [{\"operation\": "
        "click|type_text|hotkey|api_call, \"target\": control-id|null, "
        "\"payload\": object, \"rationale\": str}], \"rationale\": str, "
        "\"status\": CONTINUE|FINISH|FAIL, \"blackboard_updates\": "
        "[{\"kind\": result|error|insight|metadata, \"body\": object}]}. "
        "Prefer a registered API over an equivalent GUI sequence. Only "
        "reference control ids present in the observation."
    ),
    "judge": (
        "You judge whether a desktop automation task succeeded from its "
        "execution log. Reply with ONE JSON object: {\"verdict\": "
        "success|partial|failure, \"criteria\": [{\"description\", \"score\"}], "
        "\"rationale\": str}."
    ),
}


def render_user_prompt(role: str, inputs: dict[str, Any]) -> str:
    """Render planner inputs into the user message for chat backends."""
    sections = []
    if role == "host":
        sections.append(f"REQUEST:\n{inputs.get('trigger_key', '')}")
        sections.append(f"DESKTOP:\n{canonical_json(inputs.get('desktop', {}))}")
        if inputs.get("prior_rounds"):
            sections.append(f"PRIOR ROUNDS:\n{canonical_json(inputs['prior_rounds'])}")
    elif role == "app":
        sections.append(f"SUBTASK:\n{inputs.get('trigger_key', '')}")
        if inputs.get("agent_message"):
            sections.append(f"ORCHESTRATOR MESSAGE:\n{inputs['agent_message']}")
        sections.append(f"CONTROLS:\n{canonical_json(inputs.get('controls', []))}")
        sections.append(f"APIS:\n{canonical_json(inputs.get('action_space', []))}")
        if inputs.get("knowledge", {}).get("docs") or inputs.get("knowledge", {}).get("examples"):
            sections.append(f"KNOWLEDGE:\n{canonical_json(inputs['knowledge'])}")
        sections.append(f"BLACKBOARD:\n{canonical_json(inputs.get('blackboard', {}))}")
        if inputs.get("history"):
            sections.append(f"HISTORY:\n{canonical_json(inputs['history'])}")
        if inputs.get("denied"):
            sections.append(f"DENIED ACTIONS (do not retry):\n{canonical_json(inputs['denied'])}")
        sections.append(f"max_k: {inputs.get('max_k', 1)}")
    else:
        sections.append(f"REQUEST:\n{inputs.get('trigger_key', '')}")
        sections.append(f"LOG:\n{inputs.get('log', '')}")
    if inputs.get("repair_error"):
        sections.append(
            "Your previous reply could not be parsed "
            f"({inputs['repair_error']}). Reply with valid JSON only."
        )
    return "\n\n".join(sections)


def _ensure_dict(raw: Any) -> dict[str, Any]:
    if isinstance(raw, dict):
        return raw
    if isinstance(raw, str):
        return json.loads(raw)
    raise PlannerOutputMalformed(f"backend returned {type(raw).__name__}")


class Planner:
    """Backend-agnostic planning facade with a repair-once policy."""

    def __init__(self, backend: PlannerBackend, doc_budget: int = 1, experience_budget: int = 3):
        self.backend = backend
        self.doc_budget = doc_budget
        self.experience_budget = experience_budget

    def _complete_parsed(self, role: str, inputs: dict[str, Any], parse) -> Any:
        raw = self.backend.complete(role, inputs)
        try:
            return parse(_ensure_dict(raw))
        except (PlannerOutputMalformed, json.JSONDecodeError, ValueError) as exc:
            repair_inputs = dict(inputs)
            repair_inputs["repair_error"] = str(exc)
            raw = self.backend.complete(role, repair_inputs)
            try:
                return parse(_ensure_dict(raw))
            except (PlannerOutputMalformed, json.JSONDecodeError, ValueError) as exc2:
                raise PlannerOutputMalformed(str(exc2)) from exc2

    def plan_host(
        self,
        request: str,
        desktop: dict[str, Any],
        knowledge: dict[str, Any],
        prior_rounds: list[dict[str, Any]],
        blackboard: dict[str, Any],
    ) -> HostOutput:
        if not request.strip():
            raise ValueError("request must be non-empty")
        inputs = {
            "trigger_key": request,
            "desktop": desktop,
            "knowledge": knowledge,
            "prior_rounds": prior_rounds,
            "blackboard": blackboard,
            "history": [],
        }
        return self._complete_parsed("host", inputs, parse_host_output)

    def plan_app(
        self,
        subtask: dict[str, Any],
        observation: Observation,
        action_space: list[dict[str, Any]],
        knowledge: dict[str, Any],
        blackboard: dict[str, Any],
        history: list[dict[str, Any]],
        max_k: int,
        denied: list[dict[str, Any]] | None = None,
        agent_message: str = "",
    ) -> AppAgentOutput:
        knowledge = {
            "docs": (knowledge.get("docs") or [])[: self.doc_budget],
            "examples": (knowledge.get("examples") or [])[: self.experience_budget],
        }
        inputs = {
            "trigger_key": subtask.get("description", ""),
            "subtask": subtask,
            "controls": [c.to_json() for c in observation.controls],
            "action_space": action_space,
            "knowledge": knowledge,
            "blackboard": blackboard,
            "history": history,
            "denied": denied or [],
            "agent_message": agent_message,
            "max_k": max_k,
        }
        return self._complete_parsed(
            "app", inputs, lambda raw: parse_app_output(raw, observation, max_k)
        )

    def judge(self, request: str, log: str) -> dict[str, Any]:
        inputs = {"trigger_key": request, "log": log, "history": []}
        return self._complete_parsed("judge", inputs, _parse_judge_output)


def _parse_judge_output(raw: dict[str, Any]) -> dict[str, Any]:
    verdict = raw.get("verdict")
    if verdict not in ("success", "partial", "failure"):
        raise PlannerOutputMalformed(f"unknown verdict {verdict!r}")
    criteria = raw.get("criteria") or []
    if not isinstance(criteria, list):
        raise PlannerOutputMalformed("criteria must be a list")
    return {
        "verdict": verdict,
        "criteria": [
            {"description": str(c.get("description", "")), "score": float(c.get("score", 0.0))}
            for c in criteria
        ],
        "rationale": str(raw.get("rationale", "")),
    }

"""Session trace: append-only event log, markdown export, and replay.

The trace file is JSON-lines of event records
{"seq", "ts", "kind", "session", "round", "payload"} — exactly the records
the service streams, so replaying the event stream reconstructs the trace
file. Replay rebuilds a fresh desktop from the catalog and re-applies the
recorded launch and executor events, bypassing the planner entirely; the
resulting state hash must equal the recorded one.
"""
from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Any

from .domain import PlannedAction
from .errors import CatalogMismatch
from .simenv import Catalog, Desktop


class EventLog:
    def __init__(self, session_id: str):
        self.session_id = session_id
        self._events: list[dict[str, Any]] = []
        self._lock = threading.Lock()
        self._new_event = threading.Condition(self._lock)

    def emit(self, kind: str, payload: dict[str, Any], round_index: int = 0) -> dict[str, Any]:
        with self._new_event:
            event = {
                "seq": len(self._events) + 1,
                "ts": time.time(),
                "kind": kind,
                "session": self.session_id,
                "round": round_index,
                "payload": payload,
            }
            self._events.append(event)
            self._new_event.notify_all()
            return event

    def read_since(self, since: int = 0, wait_ms: int = 0) -> list[dict[str, Any]]:
        deadline = time.monotonic() + wait_ms / 1000.0
        with self._new_event:
            while not self._events[since:]:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._new_event.wait(remaining)
            return [dict(e) for e in self._events[since:]]

    def all_events(self) -> list[dict[str, Any]]:
        with self._lock:
            return [dict(e) for e in self._events]

    def dump_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as handle:
            for event in self.all_events():
                handle.write(json.dumps(event, sort_keys=True) + "\n")


def load_jsonl(path: str | Path) -> list[dict[str, Any]]:
    events = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            events.append(json.loads(line))
    return events


# -- derived counts ----------------------------------------------------------


def trace_counts(events: list[dict[str, Any]], round_index: int | None = None) -> dict[str, int]:
    """Counts every CLI-reported numeric is derived from."""

    def in_scope(event: dict[str, Any]) -> bool:
        return round_index is None or event.get("round") == round_index

    planner_app = sum(
        1
        for e in events
        if e["kind"] == "planner_call" and e["payload"].get("role") == "app" and in_scope(e)
    )
    planner_host = sum(
        1
        for e in events
        if e["kind"] == "planner_call" and e["payload"].get("role") == "host" and in_scope(e)
    )
    executor = sum(1 for e in events if e["kind"] == "executor_action" and in_scope(e))
    replans = sum(
        1
        for e in events
        if e["kind"] == "batch_report" and e["payload"].get("replan") and in_scope(e)
    )
    return {
        "planner_calls_app": planner_app,
        "planner_calls_host": planner_host,
        "planner_calls_total": planner_app + planner_host,
        "executor_actions": executor,
        "replans": replans,
    }


# -- markdown export ----------------------------------------------------------


def export_markdown(events: list[dict[str, Any]], session_id: str | None = None) -> str:
    """Deterministic markdown rendering of a session trace.

    One section per round; one "Step" subsection per app planner call with
    the state transitions, planner rationale, executed actions, outcomes,
    and a control snapshot summary. Timestamps are deliberately omitted so
    a fixed trace always renders to identical bytes.
    """
    if session_id is None:
        session_id = events[0]["session"] if events else "(empty)"
    lines = [f"# Session `{session_id}`", ""]

    session_meta = next((e for e in events if e["kind"] == "session_started"), None)
    if session_meta:
        lines.append(f"- catalog digest: `{session_meta['payload'].get('catalog_digest', '')}`")
        lines.append("")

    rounds = sorted({e["round"] for e in events if e["round"]})
    for round_index in rounds:
        round_events = [e for e in events if e["round"] == round_index]
        started = next((e for e in round_events if e["kind"] == "round_started"), None)
        request = started["payload"].get("request", "") if started else ""
        lines.append(f"## Round {round_index}: {request}")
        lines.append("")

        host_output = next((e for e in round_events if e["kind"] == "host_output"), None)
        if host_output:
            plan = host_output["payload"]["output"].get("subtask_plan", {})
            for i, subtask in enumerate(plan.get("subtasks", [])):
                lines.append(
                    f"- subtask {i}: {subtask.get('description', '')} "
                    f"(app: {subtask.get('target_app', '')})"
                )
            lines.append("")

        step = 0
        pending_observation: dict[str, Any] | None = None
        for event in round_events:
            kind = event["kind"]
            payload = event["payload"]
            if kind == "observation":
                pending_observation = payload
            elif kind == "planner_call" and payload.get("role") == "app":
                step += 1
                lines.append(f"### Step {step}")
                lines.append("")
                if pending_observation is not None:
                    fusion = pending_observation.get("fusion", {})
                    lines.append(
                        f"- observed {pending_observation.get('control_count', 0)} controls "
                        f"(accessibility {fusion.get('acc_count', 0)}, "
                        f"vision {fusion.get('vis_count', 0)}, "
                        f"discarded {fusion.get('discarded_count', 0)}) "
                        f"[hash `{pending_observation.get('observation_hash', '')[:12]}`]"
                    )
            elif kind == "app_output":
                output = payload.get("output", {})
                if output.get("rationale"):
                    lines.append(f"- rationale: {output['rationale']}")
                batch = output.get("batch")
                if batch:
                    for action in batch.get("actions", []):
                        lines.append(f"- planned: {_describe_action(action)}")
                lines.append(f"- status: {output.get('status', '')}")
            elif kind == "action_outcome":
                outcome = payload.get("outcome", {})
                marker = outcome.get("status", "")
                if outcome.get("fell_back"):
                    marker += " (gui fallback)"
                lines.append(f"- executed: {_describe_action(outcome.get('action', {}))} -> {marker}")
            elif kind == "action_aborted":
                lines.append(f"- aborted: {_describe_action(payload.get('action', {}))} (denied)")
            elif kind == "confirmation_requested":
                lines.append(f"- safeguard: confirmation requested ({payload.get('summary', '')})")
            elif kind == "confirmation":
                decision = "approve" if payload.get("approve") else "deny"
                auto = " [auto]" if payload.get("auto") else ""
                lines.append(f"- confirmation: {decision}{auto}")
            elif kind == "batch_report":
                lines.append(
                    f"- batch: {payload.get('executed_count', 0)}/{payload.get('k', 0)} executed, "
                    f"halted_early={str(payload.get('halted_early', False)).lower()}, "
                    f"reason={payload.get('halt_reason', 'none')}"
                )
                lines.append("")
            elif kind in ("host_transition", "app_transition"):
                lines.append(
                    f"- state: {payload.get('from')} -> {payload.get('to')} "
                    f"({payload.get('event', '')})"
                )
            elif kind == "blackboard_append":
                entry = payload.get("entry", {})
                lines.append(
                    f"- blackboard[{entry.get('seq')}] {entry.get('kind')} by {entry.get('author')}"
                )
            elif kind == "evaluation":
                lines.append("")
                lines.append(f"**Verdict: {payload.get('verdict', '')}**")
                for criterion in payload.get("criteria", []):
                    lines.append(
                        f"- criterion: {criterion.get('description', '')} -> "
                        f"{criterion.get('score', 0)}"
                    )
            elif kind == "round_finished":
                lines.append("")
                lines.append(
                    f"- outcome: {payload.get('status', '')} "
                    f"{payload.get('fail_reason', '')}".rstrip()
                )
                lines.append(f"- final state hash: `{payload.get('final_state_hash', '')}`")
                counts = payload.get("counts", {})
                if counts:
                    lines.append(
                        f"- planner calls: {counts.get('planner_calls_total', 0)} "
                        f"(host {counts.get('planner_calls_host', 0)}, "
                        f"app {counts.get('planner_calls_app', 0)}); "
                        f"executor actions: {counts.get('executor_actions', 0)}"
                    )
                lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _describe_action(action: dict[str, Any]) -> str:
    try:
        return PlannedAction.from_json(action).describe()
    except (KeyError, ValueError, TypeError):
        return json.dumps(action, sort_keys=True)


# -- replay --------------------------------------------------------------------


def replay(events: list[dict[str, Any]], catalog: Catalog) -> dict[str, Any]:
    """Re-apply the recorded action sequence against a fresh desktop.

    Returns the replayed final hash, the recorded one, and a mismatch diff
    when they differ.
    """
    session_meta = next((e for e in events if e["kind"] == "session_started"), None)
    if session_meta is None:
        raise CatalogMismatch("trace has no session_started record")
    recorded_digest = session_meta["payload"].get("catalog_digest")
    if recorded_digest != catalog.digest:
        raise CatalogMismatch(
            f"trace was recorded against catalog {recorded_digest!r}, "
            f"loaded catalog is {catalog.digest!r}"
        )

    desktop = Desktop(catalog)
    for event in events:
        kind = event["kind"]
        payload = event["payload"]
        if kind == "app_launched":
            desktop.launch_app(payload["app_id"])
        elif kind == "executor_action":
            action = PlannedAction.from_json(payload["action"])
            desktop.apply_action(payload["app_id"], action)

    recorded_hash = None
    for event in reversed(events):
        if event["kind"] in ("session_finished", "round_finished"):
            recorded_hash = event["payload"].get("final_state_hash")
            if recorded_hash:
                break

    final_hash = desktop.state_hash()
    result = {
        "final_state_hash": final_hash,
        "recorded_state_hash": recorded_hash,
        "match": recorded_hash == final_hash,
    }
    if not result["match"]:
        result["replayed_state"] = desktop.state_json()
    return result

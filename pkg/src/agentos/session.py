"""Sessions, rounds, scenarios, and the task evaluator.

A Session owns one simulated desktop, one blackboard, and one event log.
Rounds run sequentially; each round re-initializes the HostAgent with the
cumulative context of prior rounds. Scenario files pair a request with
success predicates so the rule-based evaluator has deterministic ground
truth; the planner-backed judge is available behind the same interface.

Scenario schema::

    {"request": "export the sheet as csv",
     "app_fixtures": ["sheetapp"],
     "success_predicates": [{"app": "sheetapp", "key": "saved_format",
                             "expected": "csv"}],
     "planner_fixture": "../planner/save_as_api.json",   // optional
     "risk_rules": "../rules.json",                      // optional
     "api_manifest": "../apis.json",                     // optional
     "clarification_reply": null,                        // optional
     "mode": "speculative"}                              // optional override
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

from . import trace as trace_mod
from .appagent import AgentRegistry
from .blackboard import Blackboard
from .config import RunConfig
from .detection import DetectionOptions, FixtureVisionDetector, HttpVisionDetector
from .errors import NotPending, RoundInProgress, ScenarioCriteriaMissing, SessionClosed
from .hostagent import HostAgent
from .knowledge import KnowledgeStore
from .planner import HttpBackend, Planner, ScriptedBackend
from .puppeteer import ApiRegistry, Puppeteer
from .runtime import (
    AutoApproveGate,
    ConfirmationGate,
    Decision,
    RuntimeServices,
    StdinGate,
    ThreadGate,
)
from .safeguard import load_rules
from .simenv import Catalog, Desktop
from .trace import EventLog


@dataclass(frozen=True)
class EvaluationResult:
    verdict: str  # success | partial | failure
    criteria: tuple[dict[str, Any], ...]
    rationale: str

    def to_json(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "criteria": list(self.criteria),
            "rationale": self.rationale,
        }


def aggregate_verdict(scores: list[float]) -> str:
    if scores and all(s >= 1.0 for s in scores):
        return "success"
    if any(s > 0.0 for s in scores):
        return "partial"
    return "failure"


@dataclass(frozen=True)
class Scenario:
    request: str
    app_fixtures: tuple[str, ...] = ()
    success_predicates: tuple[dict[str, Any], ...] = ()
    planner_fixture: str | None = None
    risk_rules: str | None = None
    api_manifest: str | None = None
    clarification_reply: str | None = None
    mode: str | None = None

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        data = json.loads(path.read_text())

        def resolve(key: str) -> str | None:
            value = data.get(key)
            return str((path.parent / value).resolve()) if value else None

        return cls(
            request=data["request"],
            app_fixtures=tuple(data.get("app_fixtures", [])),
            success_predicates=tuple(dict(p) for p in data.get("success_predicates", [])),
            planner_fixture=resolve("planner_fixture"),
            risk_rules=resolve("risk_rules"),
            api_manifest=resolve("api_manifest"),
            clarification_reply=data.get("clarification_reply"),
            mode=data.get("mode"),
        )


class RuleBasedEvaluator:
    """Scores scenario predicates directly against desktop document state."""

    def evaluate(self, desktop: Desktop, scenario: Scenario) -> EvaluationResult:
        if not scenario.success_predicates:
            raise ScenarioCriteriaMissing(
                f"scenario {scenario.request!r} declares no success predicates"
            )
        criteria = []
        scores = []
        for predicate in scenario.success_predicates:
            app_id, key = self._locate(predicate, scenario)
            expected = predicate.get("expected")
            instance = desktop.running_apps.get(app_id)
            actual = instance.doc_state.get(key) if instance else None
            score = 1.0 if actual == expected else 0.0
            scores.append(score)
            criteria.append(
                {
                    "description": f"{app_id}.{key} == {expected!r}",
                    "score": score,
                    "actual": actual,
                }
            )
        verdict = aggregate_verdict(scores)
        met = sum(1 for s in scores if s >= 1.0)
        return EvaluationResult(
            verdict=verdict,
            criteria=tuple(criteria),
            rationale=f"{met}/{len(scores)} success predicates met",
        )

    @staticmethod
    def _locate(predicate: dict[str, Any], scenario: Scenario) -> tuple[str, str]:
        key = predicate["key"]
        if "app" in predicate:
            return predicate["app"], key
        if "." in key:
            app_id, _, rest = key.partition(".")
            return app_id, rest
        if scenario.app_fixtures:
            return scenario.app_fixtures[0], key
        raise ScenarioCriteriaMissing(f"predicate {predicate!r} names no app")


class PlannerJudge:
    """LLM-as-judge evaluation over the markdown execution log."""

    def __init__(self, planner: Planner):
        self.planner = planner

    def evaluate(self, events: list[dict[str, Any]], request: str) -> EvaluationResult:
        log = trace_mod.export_markdown(events)
        raw = self.planner.judge(request, log)
        return EvaluationResult(
            verdict=raw["verdict"],
            criteria=tuple(raw["criteria"]),
            rationale=raw["rationale"],
        )


class _ClarificationGate:
    """Wraps a gate so scripted scenarios can answer host clarifications."""

    def __init__(self, inner: ConfirmationGate, reply: str):
        self.inner = inner
        self.reply = reply

    def request(self, info: dict[str, Any]) -> Decision:
        if info.get("kind") == "clarification":
            return Decision(approve=True, reply=self.reply)
        return self.inner.request(info)


@dataclass
class Round:
    index: int
    request: str
    status: str = "running"  # running | finished | failed
    outcome: dict[str, Any] | None = None

    @property
    def terminal(self) -> bool:
        return self.status in ("finished", "failed")

    def to_json(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "request": self.request,
            "status": self.status,
            "outcome": self.outcome,
        }


class Session:
    def __init__(
        self,
        config: RunConfig,
        catalog: Catalog,
        planner: Planner,
        api_registry: ApiRegistry | None = None,
        gate: ConfirmationGate | None = None,
        agent_registry: AgentRegistry | None = None,
        knowledge: KnowledgeStore | None = None,
        scenario_resolver: Callable[[str], Scenario | None] | None = None,
        session_id: str | None = None,
    ):
        self.id = session_id or uuid.uuid4().hex[:12]
        self.config = config
        self.catalog = catalog
        self.desktop = Desktop(catalog)
        self.blackboard = Blackboard()
        self.events = EventLog(self.id)
        self.rounds: list[Round] = []
        self.status = "open"  # open | finished | failed
        self.agent_registry = agent_registry or AgentRegistry()
        self.scenario_resolver = scenario_resolver or (lambda request: None)
        self._lock = threading.Lock()
        self._worker: threading.Thread | None = None

        self._thread_gate = gate if isinstance(gate, ThreadGate) else None
        if gate is None:
            gate = AutoApproveGate() if config.auto_approve else StdinGate()
        # A thread gate and the session must share one cancel event so that
        # cancellation also unblocks an agent parked on a confirmation.
        cancel_event = self._thread_gate.cancel_event if self._thread_gate else threading.Event()

        def emit(kind: str, payload: dict[str, Any]) -> dict[str, Any]:
            return self.events.emit(kind, payload, self.services.round_index)

        puppeteer = Puppeteer(
            desktop=self.desktop,
            registry=api_registry or ApiRegistry(),
            event_sink=lambda kind, payload: emit(kind, payload),
        )
        detector = None
        if config.vision == "fixture":
            detector = FixtureVisionDetector(self.desktop, jitter=config.vision_jitter)
        elif config.vision == "http" and config.vision_endpoint:
            detector = HttpVisionDetector(config.vision_endpoint)

        rules = load_rules(config.risk_rules) if config.risk_rules else []

        self.services = RuntimeServices(
            desktop=self.desktop,
            puppeteer=puppeteer,
            planner=planner,
            blackboard=self.blackboard,
            config=config,
            emit=emit,
            gate=gate,
            knowledge=knowledge
            or (KnowledgeStore(root=config.knowledge_dir) if config.knowledge_dir else None),
            rules=rules,
            detector=detector,
            detection_options=DetectionOptions(
                vision_confidence_floor=config.vision_confidence_floor,
                dedup_vision_overlaps=config.dedup_vision_overlaps,
            ),
            cancel_event=cancel_event,
        )
        self.blackboard.add_listener(
            lambda entry: emit("blackboard_append", {"entry": entry.to_json()})
        )
        self.events.emit(
            "session_started",
            {
                "catalog_digest": catalog.digest,
                "mode": config.mode,
                "max_k": config.max_k,
                "max_steps": config.max_steps,
            },
        )

    # -- round lifecycle ---------------------------------------------------

    def _prior_round_summaries(self) -> list[dict[str, Any]]:
        return [
            {
                "index": r.index,
                "request": r.request,
                "status": r.status,
                "verdict": (r.outcome or {}).get("verdict"),
            }
            for r in self.rounds
            if r.terminal
        ]

    def start_round(self, request: str) -> Round:
        with self._lock:
            if self.status != "open":
                raise SessionClosed(f"session {self.id} is {self.status}")
            if self.rounds and not self.rounds[-1].terminal:
                raise RoundInProgress(f"round {self.rounds[-1].index} is still running")
            round_ = Round(index=len(self.rounds) + 1, request=request)
            self.rounds.append(round_)
        return round_

    def run_round(self, request: str) -> Round:
        round_ = self.start_round(request)
        self._execute_round(round_)
        return round_

    def start_round_async(self, request: str) -> Round:
        round_ = self.start_round(request)
        worker = threading.Thread(
            target=self._execute_round, args=(round_,), name=f"session-{self.id}-round-{round_.index}"
        )
        worker.daemon = True
        self._worker = worker
        worker.start()
        return round_

    def _execute_round(self, round_: Round) -> None:
        prior = self._prior_round_summaries()
        self.services.reset_round(round_.index)
        self.events.emit("round_started", {"request": round_.request}, round_.index)

        gate = self.services.gate
        scenario = self.scenario_resolver(round_.request)
        if scenario is not None and scenario.clarification_reply:
            self.services.gate = _ClarificationGate(gate, scenario.clarification_reply)
        try:
            host = HostAgent(self.services, self.agent_registry)
            result = host.run_round(round_.request, prior_rounds=prior)
        finally:
            self.services.gate = gate

        verdict = None
        if scenario is not None and self.config.evaluator == "rules":
            evaluation = RuleBasedEvaluator().evaluate(self.desktop, scenario)
            verdict = evaluation.verdict
            self.events.emit("evaluation", evaluation.to_json(), round_.index)
        elif self.config.evaluator == "judge":
            judge = PlannerJudge(self.services.planner)
            evaluation = judge.evaluate(self.events.all_events(), round_.request)
            verdict = evaluation.verdict
            self.events.emit("evaluation", evaluation.to_json(), round_.index)

        counts = trace_mod.trace_counts(self.events.all_events(), round_.index)
        outcome = {
            "status": result.status,
            "fail_reason": result.fail_reason,
            "verdict": verdict,
            "final_state_hash": self.desktop.state_hash(),
            "counts": counts,
        }
        self.events.emit("round_finished", outcome, round_.index)
        round_.outcome = outcome
        round_.status = result.status

    # -- interaction ---------------------------------------------------------

    def confirm(self, decision: Decision) -> None:
        if self._thread_gate is None:
            raise NotPending("session has no interactive confirmation gate")
        self._thread_gate.submit(decision)

    def pending_confirmation(self) -> dict[str, Any] | None:
        return self._thread_gate.pending if self._thread_gate else None

    def cancel(self) -> None:
        self.services.cancel_event.set()

    def join(self, timeout: float | None = None) -> None:
        if self._worker is not None:
            self._worker.join(timeout)

    def close(self, failed: bool = False) -> None:
        if self.status != "open":
            return
        self.status = "failed" if failed else "finished"
        self.events.emit(
            "session_finished",
            {"status": self.status, "final_state_hash": self.desktop.state_hash()},
        )
        self.blackboard.close()

    # -- export ----------------------------------------------------------------

    def export_markdown(self) -> str:
        return trace_mod.export_markdown(self.events.all_events(), self.id)

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "status": self.status,
            "rounds": [r.to_json() for r in self.rounds],
        }


def build_planner(config: RunConfig, scenario: Scenario | None = None) -> Planner:
    if config.planner_backend == "http":
        if not config.planner_endpoint:
            raise ValueError("http planner backend needs planner_endpoint")
        backend = HttpBackend(
            endpoint=config.planner_endpoint,
            model=config.planner_model,
            api_key=config.planner_api_key,
            timeout=config.planner_timeout,
        )
    else:
        fixture = (scenario.planner_fixture if scenario else None) or config.planner_fixture
        if not fixture:
            raise ValueError("scripted planner backend needs a planner fixture")
        backend = ScriptedBackend(fixture)
    return Planner(
        backend,
        doc_budget=config.doc_budget,
        experience_budget=config.experience_budget,
    )


def build_session(
    config: RunConfig,
    scenario: Scenario | None = None,
    catalog: Catalog | None = None,
    gate: ConfirmationGate | None = None,
    planner: Planner | None = None,
    knowledge: KnowledgeStore | None = None,
    agent_registry: AgentRegistry | None = None,
    session_id: str | None = None,
) -> Session:
    """Wire a full session from config plus an optional scenario file."""
    if scenario is not None:
        if scenario.mode:
            config = replace(config, mode=scenario.mode)
        if scenario.risk_rules and not config.risk_rules:
            config = replace(config, risk_rules=scenario.risk_rules)
        if scenario.api_manifest and not config.api_manifest:
            config = replace(config, api_manifest=scenario.api_manifest)

    if catalog is None:
        if not config.catalog_dir:
            raise ValueError("config.catalog_dir is required")
        catalog = Catalog.load(config.catalog_dir)

    api_registry = (
        ApiRegistry.from_manifest(config.api_manifest) if config.api_manifest else ApiRegistry()
    )
    planner = planner or build_planner(config, scenario)
    resolver: Callable[[str], Scenario | None]
    if scenario is not None:
        resolver = lambda request: scenario  # noqa: E731 - single-scenario session
    else:
        resolver = lambda request: None  # noqa: E731

    return Session(
        config=config,
        catalog=catalog,
        planner=planner,
        api_registry=api_registry,
        gate=gate,
        agent_registry=agent_registry,
        knowledge=knowledge,
        scenario_resolver=resolver,
        session_id=session_id,
    )

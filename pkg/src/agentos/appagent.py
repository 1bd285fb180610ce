"""Per-application execution runtime.

An AppAgent runs one subtask as a ReAct loop: observe the app through the
hybrid detection pipeline, ask the planner for a speculative batch, screen
every action through the safeguard, then execute the batch with per-action
runtime validation. A local FSM gates the loop; risky actions force the
PENDING state before anything executes and only an explicit approval lets
the batch proceed.

The planner's output contract (strict JSON)::

    {"batch": [{"operation": "click", "target": "save_button",
                "payload": {}, "rationale": "..."}],
     "rationale": "...",
     "status": "CONTINUE" | "PENDING" | "FINISH" | "FAIL",
     "blackboard_updates": [{"kind": "result", "body": {...}}]}

Referenced control ids must exist in the observation; the first offender
and its suffix are dropped and a replan is signaled. A declared FINISH is
honored only when the batch survived untruncated and executed fully.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Any, Callable

from . import detection, speculative
from .domain import (
    AppState,
    Observation,
    Operation,
    PlannedAction,
    SpeculativeBatch,
    Subtask,
)
from .errors import (
    AppNotRunning,
    BackendUnavailable,
    IllegalTransition,
    NotPending,
    PlannerOutputMalformed,
)
from .runtime import Decision, RuntimeServices
from .safeguard import screen


class AppEvent(str, enum.Enum):
    STEP = "step"
    RISK_FLAGGED = "risk_flagged"
    CONFIRMED = "confirmed"
    TASK_DONE = "task_done"
    FATAL = "fatal"


APP_TRANSITIONS: dict[tuple[AppState, AppEvent], AppState] = {
    (AppState.CONTINUE, AppEvent.STEP): AppState.CONTINUE,
    (AppState.CONTINUE, AppEvent.RISK_FLAGGED): AppState.PENDING,
    (AppState.PENDING, AppEvent.CONFIRMED): AppState.CONTINUE,
    (AppState.CONTINUE, AppEvent.TASK_DONE): AppState.FINISH,
    (AppState.CONTINUE, AppEvent.FATAL): AppState.FAIL,
    (AppState.PENDING, AppEvent.FATAL): AppState.FAIL,
}

TERMINAL_APP_STATES = (AppState.FINISH, AppState.FAIL)


class AppFSM:
    def __init__(self) -> None:
        self.state = AppState.CONTINUE

    def step(self, event: AppEvent) -> AppState:
        key = (self.state, event)
        if key not in APP_TRANSITIONS:
            raise IllegalTransition(f"app fsm: no transition for {event.value} in {self.state.value}")
        self.state = APP_TRANSITIONS[key]
        return self.state


@dataclass(frozen=True)
class AppAgentOutput:
    batch: SpeculativeBatch | None
    rationale: str
    local_state: AppState
    blackboard_updates: tuple[dict[str, Any], ...] = ()
    truncated: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "batch": self.batch.to_json() if self.batch else None,
            "rationale": self.rationale,
            "status": self.local_state.value,
            "blackboard_updates": list(self.blackboard_updates),
            "truncated": self.truncated,
        }


def parse_app_output(raw: Any, observation: Observation, max_k: int) -> AppAgentOutput:
    """Validate the planner response against the output contract.

    Raises PlannerOutputMalformed for structural defects; reference and
    batch-size problems are repaired by truncation instead, because the
    executed prefix may still make progress.
    """
    if not isinstance(raw, dict):
        raise PlannerOutputMalformed(f"expected a JSON object, got {type(raw).__name__}")
    try:
        status = AppState(raw.get("status", "CONTINUE"))
    except ValueError as exc:
        raise PlannerOutputMalformed(f"unknown status {raw.get('status')!r}") from exc

    raw_batch = raw.get("batch") or []
    if not isinstance(raw_batch, list):
        raise PlannerOutputMalformed("batch must be a list of actions")
    actions: list[PlannedAction] = []
    truncated = False
    for item in raw_batch:
        try:
            action = PlannedAction.from_json(item)
        except (KeyError, TypeError, ValueError) as exc:
            raise PlannerOutputMalformed(f"bad action {item!r}: {exc}") from exc
        if action.operation is not Operation.API_CALL:
            if observation.find(action.target or "") is None:
                truncated = True
                break
        actions.append(action)

    if len(actions) > max_k:
        actions = actions[:max_k]
        truncated = True

    if status is AppState.PENDING:
        # PENDING is the safeguard's call, never the planner's.
        status = AppState.CONTINUE
    if truncated and status in TERMINAL_APP_STATES:
        status = AppState.CONTINUE

    updates = raw.get("blackboard_updates") or []
    if not isinstance(updates, list):
        raise PlannerOutputMalformed("blackboard_updates must be a list")

    return AppAgentOutput(
        batch=SpeculativeBatch(actions=tuple(actions)) if actions else None,
        rationale=str(raw.get("rationale", "")),
        local_state=status,
        blackboard_updates=tuple(dict(u) for u in updates),
        truncated=truncated,
    )


@dataclass(frozen=True)
class SubtaskResult:
    state: AppState
    reason: str = ""
    planner_calls: int = 0


class AppAgent:
    """Native agent driving one application of the simulated desktop."""

    def __init__(self, app_id: str, services: RuntimeServices, agent_id: str | None = None):
        self.app_id = app_id
        self.services = services
        self.agent_id = agent_id or f"appagent:{app_id}"
        self.fsm = AppFSM()
        self._pending_batch: AppAgentOutput | None = None

    # -- perception ----------------------------------------------------------

    def observe(self) -> Observation:
        observation, metadata = detection.observe(
            self.services.desktop,
            self.app_id,
            self.services.detector,
            self.services.detection_options,
        )
        self.services.emit(
            "observation",
            {
                "app_id": self.app_id,
                "observation_hash": observation.hash(),
                "control_count": len(observation.controls),
                "fusion": metadata.to_json(),
                "tick": observation.timestamp,
            },
        )
        return observation

    # -- planning ------------------------------------------------------------

    def react_step(
        self,
        subtask: Subtask,
        observation: Observation,
        history: list[AppAgentOutput],
        agent_message: str,
        denied: list[dict[str, Any]],
    ) -> AppAgentOutput:
        services = self.services
        knowledge = {"docs": [], "examples": []}
        if services.knowledge is not None:
            found = services.knowledge.retrieve(
                self.app_id,
                subtask.description,
                k_docs=services.config.doc_budget,
                k_exp=services.config.experience_budget,
            )
            knowledge = {
                "docs": [d.to_json() for d in found["docs"]],
                "examples": [e.to_json() for e in found["examples"]],
            }

        step_number = services.consume_step()
        services.emit(
            "planner_call",
            {
                "role": "app",
                "agent": self.agent_id,
                "subtask": subtask.description,
                "observation_hash": observation.hash(),
                "step": step_number,
                "docs": len(knowledge["docs"]),
                "examples": len(knowledge["examples"]),
            },
        )
        return services.planner.plan_app(
            subtask=subtask.to_json(),
            observation=observation,
            action_space=services.puppeteer.registry.action_space(self.app_id),
            knowledge=knowledge,
            blackboard=services.blackboard.view(),
            history=[o.to_json() for o in history[-5:]],
            denied=denied,
            agent_message=agent_message,
            max_k=services.config.max_k,
        )

    def _screen_batch(self, output: AppAgentOutput, observation: Observation) -> list[int]:
        risky_indices = []
        actions = output.batch.actions if output.batch else ()
        for index, action in enumerate(actions):
            result = screen(
                action,
                self.services.rules,
                context=observation,
                registry=self.services.puppeteer.registry,
            )
            self.services.emit(
                "safeguard",
                {
                    "agent": self.agent_id,
                    "index": index,
                    "action": action.to_json(),
                    **result.to_json(),
                },
            )
            if result.risky:
                risky_indices.append(index)
        return risky_indices

    # -- confirmation --------------------------------------------------------

    def resume(self, decision: Decision) -> AppState:
        if self.fsm.state is not AppState.PENDING:
            raise NotPending(f"agent {self.agent_id} is not awaiting confirmation")
        self.services.emit(
            "confirmation",
            {"agent": self.agent_id, **decision.to_json()},
        )
        if decision.cancelled:
            return self._transition(AppEvent.FATAL, "cancelled")
        return self._transition(AppEvent.CONFIRMED, "approved" if decision.approve else "denied")

    # -- execution loop ------------------------------------------------------

    def run_subtask(
        self,
        subtask: Subtask,
        agent_message: str = "",
    ) -> SubtaskResult:
        services = self.services
        self.fsm = AppFSM()
        history: list[AppAgentOutput] = []
        denied: list[dict[str, Any]] = []
        planner_calls = 0

        while self.fsm.state is AppState.CONTINUE:
            if services.cancelled():
                self._transition(AppEvent.FATAL, "cancelled")
                return SubtaskResult(AppState.FAIL, "cancelled", planner_calls)
            try:
                observation = self.observe()
            except AppNotRunning as exc:
                self._transition(AppEvent.FATAL, "AppNotRunning")
                return SubtaskResult(AppState.FAIL, f"AppNotRunning: {exc}", planner_calls)

            if services.budget_exhausted():
                self._transition(AppEvent.FATAL, "BudgetExhausted")
                return SubtaskResult(AppState.FAIL, "BudgetExhausted", planner_calls)

            try:
                output = self.react_step(subtask, observation, history, agent_message, denied)
            except (PlannerOutputMalformed, BackendUnavailable) as exc:
                planner_calls += 1
                self._transition(AppEvent.FATAL, type(exc).__name__)
                return SubtaskResult(AppState.FAIL, f"{type(exc).__name__}: {exc}", planner_calls)
            planner_calls += 1

            declared_state = output.local_state
            risky = self._screen_batch(output, observation)
            if risky:
                output = replace(output, local_state=AppState.PENDING)
            history.append(output)
            services.emit("app_output", {"agent": self.agent_id, "output": output.to_json()})

            if risky:
                self._transition(AppEvent.RISK_FLAGGED, "risky action flagged")
                assert output.batch is not None
                info = {
                    "kind": "safeguard",
                    "agent": self.agent_id,
                    "app_id": self.app_id,
                    "risky_indices": risky,
                    "actions": [a.to_json() for a in output.batch.actions],
                    "summary": output.batch.actions[risky[0]].describe(),
                }
                services.emit("confirmation_requested", info)
                decision = services.gate.request(info)
                self.resume(decision)
                if decision.cancelled:
                    return SubtaskResult(AppState.FAIL, "cancelled", planner_calls)
                if not decision.approve:
                    for index in risky:
                        action = output.batch.actions[index]
                        services.emit(
                            "action_aborted",
                            {"agent": self.agent_id, "action": action.to_json(), "reason": "denied"},
                        )
                        denied.append(action.to_json())
                    self._transition(AppEvent.STEP, "replanning after denial")
                    continue

            report = None
            if output.batch is not None:
                report = speculative.run_batch(
                    output.batch,
                    observation,
                    execute=services.puppeteer.execute,
                    observe=lambda: self.observe(),
                    registry=services.puppeteer.registry,
                    hook=lambda kind, payload: services.emit(kind, {"agent": self.agent_id, **payload}),
                    cancelled=services.cancelled,
                )

            for update in output.blackboard_updates:
                services.blackboard.append(
                    body=dict(update.get("body") or {}),
                    author=self.agent_id,
                    kind=update.get("kind", "metadata"),
                    round=services.round_index,
                )

            if report is not None and report.halt_detail == "cancelled":
                self._transition(AppEvent.FATAL, "cancelled")
                return SubtaskResult(AppState.FAIL, "cancelled", planner_calls)

            finished = (
                declared_state is AppState.FINISH
                and not output.truncated
                and (report is None or not report.halted_early)
            )
            if finished:
                self._transition(AppEvent.TASK_DONE, "planner declared completion")
                return SubtaskResult(AppState.FINISH, "", planner_calls)
            if declared_state is AppState.FAIL:
                self._transition(AppEvent.FATAL, "planner declared failure")
                return SubtaskResult(AppState.FAIL, "planner declared failure", planner_calls)

            self._transition(AppEvent.STEP, "continue")

        return SubtaskResult(self.fsm.state, "", planner_calls)

    def _transition(self, event: AppEvent, reason: str) -> AppState:
        before = self.fsm.state
        after = self.fsm.step(event)
        self.services.emit(
            "app_transition",
            {
                "agent": self.agent_id,
                "from": before.value,
                "to": after.value,
                "event": event.value,
                "reason": reason,
            },
        )
        return after


class AdapterPlanner:
    """Planner-shaped wrapper around an external agent callable.

    The adapter receives (subtask, observation, context) and returns a raw
    AppAgent-shaped response dict; it is parsed through the same contract
    as native planner output so safeguards and validation still apply.
    """

    def __init__(self, adapter: Callable[[dict[str, Any], Observation, dict[str, Any]], dict[str, Any]]):
        self.adapter = adapter

    def plan_app(self, subtask: dict[str, Any], observation: Observation, max_k: int,
                 **context: Any) -> AppAgentOutput:
        raw = self.adapter(subtask, observation, context)
        return parse_app_output(raw, observation, max_k)

    def plan_host(self, **_: Any):  # pragma: no cover - shims never orchestrate
        raise NotImplementedError("external shims only run subtasks")


class ExternalShimAgent(AppAgent):
    """Compatibility shim exposing a third-party executor as an AppAgent."""

    def __init__(self, app_id: str, services: RuntimeServices, adapter, agent_id: str | None = None):
        shim_services = replace(services, planner=AdapterPlanner(adapter))
        super().__init__(app_id, shim_services, agent_id or f"shim:{app_id}")


class AgentRegistry:
    """Resolves app ids to agent factories; unregistered apps get the
    native AppAgent."""

    def __init__(self) -> None:
        self._factories: dict[str, Callable[[str, RuntimeServices], AppAgent]] = {}

    def register(self, app_id: str, factory: Callable[[str, RuntimeServices], AppAgent]) -> None:
        self._factories[app_id] = factory

    def register_external(self, app_id: str, adapter) -> None:
        self._factories[app_id] = lambda aid, services: ExternalShimAgent(aid, services, adapter)

    def create(self, app_id: str, services: RuntimeServices) -> AppAgent:
        factory = self._factories.get(app_id)
        if factory is None:
            return AppAgent(app_id, services)
        return factory(app_id, services)

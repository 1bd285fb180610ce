"""Control-plane orchestrator.

The HostAgent turns a user request into a dependency-ordered subtask plan,
launches target applications, instantiates (or reuses) AppAgents through
the agent registry, and walks its own FSM: CONTINUE evaluates readiness,
ASSIGN hands a subtask to an agent, PENDING awaits a user clarification,
FINISH/FAIL are absorbing terminals.

Host planner output contract (strict JSON)::

    {"subtask_plan": {"origin_request": "...",
                      "subtasks": [{"description": "...", "target_app": "...",
                                    "depends_on": []}]},
     "shell_commands": [],
     "assigned_app": {"app_id": "...", "instance": 0} | null,
     "agent_message": "...",
     "user_prompt": null,
     "status": "CONTINUE" | "ASSIGN" | "PENDING" | "FINISH" | "FAIL"}
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

from .appagent import AgentRegistry, AppAgent
from .domain import AppState, HostState, SubtaskPlan
from .errors import (
    BackendUnavailable,
    IllegalTransition,
    PlannerOutputMalformed,
    UnknownApp,
)
from .runtime import RuntimeServices


class HostEvent(str, enum.Enum):
    SUBTASK_READY = "subtask_ready"
    SUBTASK_DONE = "subtask_done"
    SUBTASK_FAILED = "subtask_failed"
    CLARIFICATION_NEEDED = "clarification_needed"
    USER_REPLY = "user_reply"
    ALL_DONE = "all_done"
    FATAL = "fatal"


HOST_TRANSITIONS: dict[tuple[HostState, HostEvent], HostState] = {
    (HostState.CONTINUE, HostEvent.SUBTASK_READY): HostState.ASSIGN,
    (HostState.ASSIGN, HostEvent.SUBTASK_DONE): HostState.CONTINUE,
    (HostState.ASSIGN, HostEvent.SUBTASK_FAILED): HostState.FAIL,
    (HostState.CONTINUE, HostEvent.CLARIFICATION_NEEDED): HostState.PENDING,
    (HostState.PENDING, HostEvent.USER_REPLY): HostState.CONTINUE,
    (HostState.CONTINUE, HostEvent.ALL_DONE): HostState.FINISH,
}

for _state in (HostState.CONTINUE, HostState.ASSIGN, HostState.PENDING):
    HOST_TRANSITIONS[(_state, HostEvent.FATAL)] = HostState.FAIL

TERMINAL_HOST_STATES = (HostState.FINISH, HostState.FAIL)


class HostFSM:
    def __init__(self) -> None:
        self.state = HostState.CONTINUE

    def step(self, event: HostEvent) -> HostState:
        key = (self.state, event)
        if key not in HOST_TRANSITIONS:
            raise IllegalTransition(
                f"host fsm: no transition for {event.value} in {self.state.value}"
            )
        self.state = HOST_TRANSITIONS[key]
        return self.state


@dataclass(frozen=True)
class HostOutput:
    subtask_plan: SubtaskPlan
    shell_commands: tuple[str, ...]
    assigned_app: dict[str, Any] | None
    agent_message: str
    user_prompt: str | None
    host_state: HostState

    def to_json(self) -> dict[str, Any]:
        return {
            "subtask_plan": self.subtask_plan.to_json(),
            "shell_commands": list(self.shell_commands),
            "assigned_app": self.assigned_app,
            "agent_message": self.agent_message,
            "user_prompt": self.user_prompt,
            "status": self.host_state.value,
        }


def parse_host_output(raw: Any) -> HostOutput:
    if not isinstance(raw, dict):
        raise PlannerOutputMalformed(f"expected a JSON object, got {type(raw).__name__}")
    try:
        state = HostState(raw.get("status", "CONTINUE"))
    except ValueError as exc:
        raise PlannerOutputMalformed(f"unknown host status {raw.get('status')!r}") from exc
    try:
        plan = SubtaskPlan.from_json(raw.get("subtask_plan") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise PlannerOutputMalformed(f"bad subtask plan: {exc}") from exc

    assigned = raw.get("assigned_app")
    user_prompt = raw.get("user_prompt")
    if state is HostState.ASSIGN and not assigned:
        raise PlannerOutputMalformed("ASSIGN output must name an assigned_app")
    if state is HostState.PENDING and not user_prompt:
        raise PlannerOutputMalformed("PENDING output must carry a user_prompt")

    return HostOutput(
        subtask_plan=plan,
        shell_commands=tuple(raw.get("shell_commands") or ()),
        assigned_app=dict(assigned) if assigned else None,
        agent_message=str(raw.get("agent_message", "")),
        user_prompt=user_prompt,
        host_state=state,
    )


@dataclass(frozen=True)
class RoundResult:
    status: str  # "finished" | "failed"
    fail_reason: str = ""
    host_state: HostState = HostState.FINISH

    @property
    def succeeded(self) -> bool:
        return self.status == "finished"


MAX_CLARIFICATIONS = 3


class HostAgent:
    def __init__(self, services: RuntimeServices, registry: AgentRegistry | None = None):
        self.services = services
        self.registry = registry or AgentRegistry()
        self.fsm = HostFSM()
        self.active_agents: dict[str, AppAgent] = {}

    # -- planning ------------------------------------------------------------

    def desktop_summary(self) -> dict[str, Any]:
        desktop = self.services.desktop
        return {
            "running": sorted(a for a in desktop.running_apps if desktop.is_running(a)),
            "available": [
                {"app_id": d.app_id, "display_name": d.display_name}
                for d in desktop.catalog.apps.values()
            ],
        }

    def decompose(self, request: str, prior_rounds: list[dict[str, Any]]) -> HostOutput:
        if not request.strip():
            raise ValueError("request must be non-empty")
        self.services.emit(
            "planner_call",
            {"role": "host", "request": request, "prior_rounds": prior_rounds},
        )
        output = self.services.planner.plan_host(
            request=request,
            desktop=self.desktop_summary(),
            knowledge={"docs": [], "examples": []},
            prior_rounds=prior_rounds,
            blackboard=self.services.blackboard.view(),
        )
        self.services.emit("host_output", {"output": output.to_json()})
        return output

    # -- round execution -----------------------------------------------------

    def run_round(self, request: str, prior_rounds: list[dict[str, Any]] | None = None) -> RoundResult:
        self.fsm = HostFSM()
        self.active_agents = {}
        prior_rounds = prior_rounds or []

        try:
            output = self.decompose(request, prior_rounds)
        except (PlannerOutputMalformed, BackendUnavailable) as exc:
            self._transition(HostEvent.FATAL, type(exc).__name__)
            return RoundResult("failed", f"{type(exc).__name__}: {exc}", self.fsm.state)

        clarifications = 0
        while output.host_state is HostState.PENDING:
            if clarifications >= MAX_CLARIFICATIONS:
                self._transition(HostEvent.FATAL, "too many clarification rounds")
                return RoundResult("failed", "too many clarification rounds", self.fsm.state)
            self._transition(HostEvent.CLARIFICATION_NEEDED, output.user_prompt or "")
            info = {
                "kind": "clarification",
                "prompt": output.user_prompt or "",
                "request": request,
            }
            self.services.emit("user_prompt", {"prompt": output.user_prompt or ""})
            decision = self.services.gate.request(info)
            self.services.emit("confirmation", decision.to_json())
            if decision.cancelled or not decision.reply:
                self._transition(HostEvent.FATAL, "no clarification received")
                return RoundResult("failed", "no clarification received", self.fsm.state)
            self._transition(HostEvent.USER_REPLY, decision.reply)
            request = f"{request}\nclarification: {decision.reply}"
            clarifications += 1
            try:
                output = self.decompose(request, prior_rounds)
            except (PlannerOutputMalformed, BackendUnavailable) as exc:
                self._transition(HostEvent.FATAL, type(exc).__name__)
                return RoundResult("failed", f"{type(exc).__name__}: {exc}", self.fsm.state)

        if output.host_state is HostState.FAIL:
            self._transition(HostEvent.FATAL, "planner declared failure")
            return RoundResult("failed", "planner declared failure", self.fsm.state)

        plan = output.subtask_plan
        if output.host_state is HostState.FINISH or not plan.subtasks:
            self._transition(HostEvent.ALL_DONE, "nothing to do")
            return RoundResult("finished", "", self.fsm.state)

        for index, subtask in enumerate(plan.subtasks):
            if self.services.cancelled():
                self._transition(HostEvent.FATAL, "cancelled")
                return RoundResult("failed", "cancelled", self.fsm.state)

            self._transition(HostEvent.SUBTASK_READY, subtask.description)
            try:
                agent = self._assign(subtask.target_app)
            except UnknownApp as exc:
                self._transition(HostEvent.SUBTASK_FAILED, str(exc))
                return RoundResult("failed", f"UnknownApp: {exc}", self.fsm.state)

            self.services.emit(
                "subtask_started",
                {
                    "index": index,
                    "description": subtask.description,
                    "target_app": subtask.target_app,
                    "agent": agent.agent_id,
                },
            )
            result = agent.run_subtask(subtask, agent_message=output.agent_message)
            self.services.emit(
                "subtask_finished",
                {
                    "index": index,
                    "description": subtask.description,
                    "state": result.state.value,
                    "reason": result.reason,
                },
            )
            if result.state is AppState.FINISH:
                self._transition(HostEvent.SUBTASK_DONE, subtask.description)
            else:
                self._transition(HostEvent.SUBTASK_FAILED, result.reason)
                return RoundResult("failed", result.reason or "subtask failed", self.fsm.state)

        self._transition(HostEvent.ALL_DONE, "all subtasks complete")
        self.active_agents = {}
        return RoundResult("finished", "", self.fsm.state)

    # -- assignment ----------------------------------------------------------

    def _assign(self, app_id: str) -> AppAgent:
        desktop = self.services.desktop
        if not desktop.is_running(app_id):
            desktop.launch_app(app_id)
            self.services.emit("app_launched", {"app_id": app_id})
        if app_id not in self.active_agents:
            agent = self.registry.create(app_id, self.services)
            self.active_agents[app_id] = agent
            self.services.emit(
                "agent_created",
                {"app_id": app_id, "agent": agent.agent_id, "instance": 0},
            )
        return self.active_agents[app_id]

    def _transition(self, event: HostEvent, reason: str) -> HostState:
        before = self.fsm.state
        after = self.fsm.step(event)
        self.services.emit(
            "host_transition",
            {"from": before.value, "to": after.value, "event": event.value, "reason": reason},
        )
        return after

"""Shared per-session runtime services and the confirmation gates.

A RuntimeServices bundle wires one session's desktop, executor, planner,
knowledge store, blackboard, safeguard rules, and trace emitter together so
agents stay constructor-light. The confirmation gate abstracts how PENDING
states get resolved: auto-approval for headless CI, a queue for tests,
stdin for the interactive CLI, and a thread gate for the HTTP service.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from .blackboard import Blackboard
from .config import RunConfig
from .detection import DetectionOptions, VisionDetector
from .errors import NotPending
from .knowledge import KnowledgeStore
from .puppeteer import Puppeteer
from .safeguard import RiskRule
from .simenv import Desktop


@dataclass(frozen=True)
class Decision:
    approve: bool
    auto: bool = False
    reply: str | None = None
    cancelled: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "approve": self.approve,
            "auto": self.auto,
            "reply": self.reply,
            "cancelled": self.cancelled,
        }


class ConfirmationGate(Protocol):
    def request(self, info: dict[str, Any]) -> Decision: ...


class AutoApproveGate:
    """Headless mode: every confirmation resolves to an approval and the
    auto flag is recorded in the trace."""

    def request(self, info: dict[str, Any]) -> Decision:
        return Decision(approve=True, auto=True)


class QueueGate:
    """Scripted decisions for tests, consumed in order."""

    def __init__(self, decisions: list[Decision]):
        self.decisions = list(decisions)
        self.requests: list[dict[str, Any]] = []

    def request(self, info: dict[str, Any]) -> Decision:
        self.requests.append(info)
        if not self.decisions:
            return Decision(approve=False)
        return self.decisions.pop(0)


class StdinGate:
    """Interactive CLI confirmations."""

    def request(self, info: dict[str, Any]) -> Decision:
        if info.get("kind") == "clarification":
            reply = input(f"{info.get('prompt', 'Clarification needed')}: ")
            return Decision(approve=True, reply=reply)
        print(f"Risky action pending approval: {info.get('summary', info)}")
        answer = input("approve? [y/N]: ").strip().lower()
        return Decision(approve=answer in ("y", "yes"))


class ThreadGate:
    """Blocking gate resolved from another thread (the HTTP service).

    request() parks the executing agent until submit() delivers a decision
    or the session's cancel event fires.
    """

    def __init__(self, cancel_event: threading.Event | None = None, poll_interval: float = 0.05):
        self.cancel_event = cancel_event or threading.Event()
        self._poll_interval = poll_interval
        self._lock = threading.Lock()
        self._pending: dict[str, Any] | None = None
        self._decision: Decision | None = None
        self._resolved = threading.Event()

    @property
    def pending(self) -> dict[str, Any] | None:
        with self._lock:
            return dict(self._pending) if self._pending is not None else None

    def request(self, info: dict[str, Any]) -> Decision:
        with self._lock:
            self._pending = dict(info)
            self._decision = None
            self._resolved.clear()
        try:
            while True:
                if self._resolved.wait(self._poll_interval):
                    with self._lock:
                        assert self._decision is not None
                        return self._decision
                if self.cancel_event.is_set():
                    return Decision(approve=False, cancelled=True)
        finally:
            with self._lock:
                self._pending = None

    def submit(self, decision: Decision) -> None:
        with self._lock:
            if self._pending is None:
                raise NotPending("no confirmation is awaited")
            self._decision = decision
        self._resolved.set()


EmitFn = Callable[[str, dict[str, Any]], dict[str, Any]]


@dataclass
class RuntimeServices:
    desktop: Desktop
    puppeteer: Puppeteer
    planner: Any
    blackboard: Blackboard
    config: RunConfig
    emit: EmitFn
    gate: ConfirmationGate = field(default_factory=AutoApproveGate)
    knowledge: KnowledgeStore | None = None
    rules: list[RiskRule] = field(default_factory=list)
    detector: VisionDetector | None = None
    detection_options: DetectionOptions = field(default_factory=DetectionOptions)
    cancel_event: threading.Event = field(default_factory=threading.Event)
    round_index: int = 0
    steps_used: int = 0

    def reset_round(self, round_index: int) -> None:
        self.round_index = round_index
        self.steps_used = 0
        self.cancel_event.clear()

    def budget_exhausted(self) -> bool:
        return self.steps_used >= self.config.max_steps

    def consume_step(self) -> int:
        self.steps_used += 1
        return self.steps_used

    def cancelled(self) -> bool:
        return self.cancel_event.is_set()

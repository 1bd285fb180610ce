"""Core data model shared by every runtime module.

All types are immutable value objects with a canonical JSON form
(lower_snake_case field names). That JSON form is the wire format of the
service API and the on-disk trace format, so round-tripping must be exact.

Box geometry is integer pixels in window coordinates; a box (l, t, r, b)
covers the half-open cell region [l, r) x [t, b). IoU is computed in exact
rational arithmetic because the fusion dedup rule is a hard 10% threshold.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any


def canonical_json(payload: Any) -> str:
    """Serialize to the canonical form used for hashing and traces."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class ControlSource(str, enum.Enum):
    ACCESSIBILITY = "accessibility"
    VISION = "vision"


class Operation(str, enum.Enum):
    CLICK = "click"
    TYPE_TEXT = "type_text"
    HOTKEY = "hotkey"
    API_CALL = "api_call"


GUI_OPERATIONS = (Operation.CLICK, Operation.TYPE_TEXT, Operation.HOTKEY)


class HostState(str, enum.Enum):
    CONTINUE = "CONTINUE"
    ASSIGN = "ASSIGN"
    PENDING = "PENDING"
    FINISH = "FINISH"
    FAIL = "FAIL"


class AppState(str, enum.Enum):
    CONTINUE = "CONTINUE"
    PENDING = "PENDING"
    FINISH = "FINISH"
    FAIL = "FAIL"


class HaltReason(str, enum.Enum):
    NONE = "none"
    VALIDATION_FAILED = "validation_failed"
    EXECUTION_ERROR = "execution_error"


class EntryKind(str, enum.Enum):
    RESULT = "result"
    ERROR = "error"
    INSIGHT = "insight"
    METADATA = "metadata"


@dataclass(frozen=True, slots=True)
class BoundingBox:
    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self) -> None:
        if self.left > self.right or self.top > self.bottom:
            raise ValueError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.left, self.top, self.right, self.bottom)

    @property
    def area(self) -> int:
        return (self.right - self.left) * (self.bottom - self.top)

    def intersection_area(self, other: "BoundingBox") -> int:
        width = min(self.right, other.right) - max(self.left, other.left)
        height = min(self.bottom, other.bottom) - max(self.top, other.top)
        if width <= 0 or height <= 0:
            return 0
        return width * height

    def contains(self, x: int, y: int) -> bool:
        return self.left <= x < self.right and self.top <= y < self.bottom

    @property
    def center(self) -> tuple[int, int]:
        return ((self.left + self.right) // 2, (self.top + self.bottom) // 2)

    def to_json(self) -> list[int]:
        return [self.left, self.top, self.right, self.bottom]

    @classmethod
    def from_json(cls, data: list[int]) -> "BoundingBox":
        return cls(*map(int, data))


def iou(a: BoundingBox, b: BoundingBox) -> Fraction:
    """Exact intersection-over-union of two boxes; 0 when the union is empty."""
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    if union == 0:
        return Fraction(0)
    return Fraction(inter, union)


@dataclass(frozen=True, slots=True)
class Control:
    id: str
    source: ControlSource
    control_type: str
    label: str
    box: BoundingBox
    visible: bool = True
    enabled: bool = True
    som_mark: int | None = None
    confidence: float | None = None

    def __post_init__(self) -> None:
        if self.source is ControlSource.VISION:
            if self.confidence is None or not (0.0 <= self.confidence <= 1.0):
                raise ValueError(f"vision control {self.id!r} needs a confidence in [0,1]")

    def with_mark(self, mark: int) -> "Control":
        return Control(
            id=self.id,
            source=self.source,
            control_type=self.control_type,
            label=self.label,
            box=self.box,
            visible=self.visible,
            enabled=self.enabled,
            som_mark=mark,
            confidence=self.confidence,
        )

    def to_json(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "id": self.id,
            "source": self.source.value,
            "control_type": self.control_type,
            "label": self.label,
            "box": self.box.to_json(),
            "visible": self.visible,
            "enabled": self.enabled,
        }
        if self.som_mark is not None:
            data["som_mark"] = self.som_mark
        if self.confidence is not None:
            data["confidence"] = self.confidence
        return data

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Control":
        return cls(
            id=data["id"],
            source=ControlSource(data["source"]),
            control_type=data["control_type"],
            label=data["label"],
            box=BoundingBox.from_json(data["box"]),
            visible=data.get("visible", True),
            enabled=data.get("enabled", True),
            som_mark=data.get("som_mark"),
            confidence=data.get("confidence"),
        )


@dataclass(frozen=True, slots=True)
class Observation:
    app_id: str
    screenshot_ref: str
    controls: tuple[Control, ...]
    timestamp: int

    def __post_init__(self) -> None:
        ids = [c.id for c in self.controls]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate control ids in observation")
        marks = [c.som_mark for c in self.controls if c.som_mark is not None]
        if len(set(marks)) != len(marks):
            raise ValueError("duplicate som marks in observation")

    def find(self, control_id: str) -> Control | None:
        for control in self.controls:
            if control.id == control_id:
                return control
        return None

    def hash(self) -> str:
        return digest(self.to_json())

    def to_json(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "screenshot_ref": self.screenshot_ref,
            "controls": [c.to_json() for c in self.controls],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Observation":
        return cls(
            app_id=data["app_id"],
            screenshot_ref=data["screenshot_ref"],
            controls=tuple(Control.from_json(c) for c in data["controls"]),
            timestamp=data["timestamp"],
        )


@dataclass(frozen=True, slots=True)
class PlannedAction:
    operation: Operation
    target: str | None = None
    payload: dict[str, Any] = field(default_factory=dict)
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.operation in GUI_OPERATIONS and not self.target:
            raise ValueError(f"{self.operation.value} action requires a target control")
        if self.operation is Operation.API_CALL and not self.payload.get("api"):
            raise ValueError("api_call action requires payload['api']")

    @property
    def api_name(self) -> str | None:
        return self.payload.get("api") if self.operation is Operation.API_CALL else None

    def describe(self) -> str:
        if self.operation is Operation.API_CALL:
            return f"api_call {self.payload.get('api')}"
        detail = ""
        if self.operation is Operation.TYPE_TEXT:
            detail = f" text={self.payload.get('text', '')!r}"
        elif self.operation is Operation.HOTKEY:
            detail = f" keys={self.payload.get('keys', '')!r}"
        return f"{self.operation.value} {self.target}{detail}"

    def to_json(self) -> dict[str, Any]:
        return {
            "operation": self.operation.value,
            "target": self.target,
            "payload": self.payload,
            "rationale": self.rationale,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "PlannedAction":
        return cls(
            operation=Operation(data["operation"]),
            target=data.get("target"),
            payload=dict(data.get("payload") or {}),
            rationale=data.get("rationale", ""),
        )


@dataclass(frozen=True, slots=True)
class SpeculativeBatch:
    actions: tuple[PlannedAction, ...]

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValueError("batch must contain at least one action")

    @property
    def k(self) -> int:
        return len(self.actions)

    def to_json(self) -> dict[str, Any]:
        return {"actions": [a.to_json() for a in self.actions], "k": self.k}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "SpeculativeBatch":
        return cls(actions=tuple(PlannedAction.from_json(a) for a in data["actions"]))


@dataclass(frozen=True, slots=True)
class ActionOutcome:
    """Result of pushing one PlannedAction through the executor."""

    action: PlannedAction
    status: str  # "ok" | "no_op" | "error"
    error_code: str | None = None
    message: str = ""
    fell_back: bool = False
    executor_actions: int = 1
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def is_error(self) -> bool:
        return self.status == "error"

    def to_json(self) -> dict[str, Any]:
        return {
            "action": self.action.to_json(),
            "status": self.status,
            "error_code": self.error_code,
            "message": self.message,
            "fell_back": self.fell_back,
            "executor_actions": self.executor_actions,
            "details": self.details,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ActionOutcome":
        return cls(
            action=PlannedAction.from_json(data["action"]),
            status=data["status"],
            error_code=data.get("error_code"),
            message=data.get("message", ""),
            fell_back=data.get("fell_back", False),
            executor_actions=data.get("executor_actions", 1),
            details=dict(data.get("details") or {}),
        )


@dataclass(frozen=True, slots=True)
class ExecutionReport:
    """Outcome of one speculative batch: the completed prefix plus halt info."""

    batch: SpeculativeBatch
    executed: tuple[ActionOutcome, ...]
    halted_early: bool
    halt_reason: HaltReason
    final_context: Observation
    halt_detail: str = ""

    def __post_init__(self) -> None:
        if self.halted_early != (len(self.executed) < self.batch.k):
            raise ValueError("halted_early must mirror |executed| < k")

    @property
    def needs_replan(self) -> bool:
        return self.halted_early

    def to_json(self) -> dict[str, Any]:
        return {
            "batch": self.batch.to_json(),
            "executed": [o.to_json() for o in self.executed],
            "halted_early": self.halted_early,
            "halt_reason": self.halt_reason.value,
            "halt_detail": self.halt_detail,
            "final_context": self.final_context.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ExecutionReport":
        return cls(
            batch=SpeculativeBatch.from_json(data["batch"]),
            executed=tuple(ActionOutcome.from_json(o) for o in data["executed"]),
            halted_early=data["halted_early"],
            halt_reason=HaltReason(data["halt_reason"]),
            final_context=Observation.from_json(data["final_context"]),
            halt_detail=data.get("halt_detail", ""),
        )


@dataclass(frozen=True, slots=True)
class Subtask:
    description: str
    target_app: str
    depends_on: tuple[int, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "description": self.description,
            "target_app": self.target_app,
            "depends_on": list(self.depends_on),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Subtask":
        return cls(
            description=data["description"],
            target_app=data["target_app"],
            depends_on=tuple(data.get("depends_on") or ()),
        )


@dataclass(frozen=True, slots=True)
class SubtaskPlan:
    subtasks: tuple[Subtask, ...]
    origin_request: str

    def __post_init__(self) -> None:
        for index, subtask in enumerate(self.subtasks):
            for dep in subtask.depends_on:
                if not 0 <= dep < index:
                    raise ValueError(
                        f"subtask {index} depends on {dep}; dependencies must precede dependents"
                    )

    def to_json(self) -> dict[str, Any]:
        return {
            "subtasks": [s.to_json() for s in self.subtasks],
            "origin_request": self.origin_request,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "SubtaskPlan":
        return cls(
            subtasks=tuple(Subtask.from_json(s) for s in data.get("subtasks") or ()),
            origin_request=data.get("origin_request", ""),
        )


@dataclass(frozen=True, slots=True)
class BlackboardEntry:
    seq: int
    author: str
    kind: EntryKind
    body: dict[str, Any]
    round: int

    def to_json(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "author": self.author,
            "kind": self.kind.value,
            "body": self.body,
            "round": self.round,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "BlackboardEntry":
        return cls(
            seq=data["seq"],
            author=data["author"],
            kind=EntryKind(data["kind"]),
            body=dict(data["body"]),
            round=data["round"],
        )

"""Deterministic desktop-automation agent runtime."""

__version__ = "0.1.0"

from .domain import (  # noqa: F401
    ActionOutcome,
    AppState,
    BlackboardEntry,
    BoundingBox,
    Control,
    ControlSource,
    ExecutionReport,
    HaltReason,
    HostState,
    Observation,
    Operation,
    PlannedAction,
    SpeculativeBatch,
    Subtask,
    SubtaskPlan,
    iou,
)

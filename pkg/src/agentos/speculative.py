"""Speculative multi-action executor.

One planner call yields a batch of k actions. Each action is validated
against the context produced by its predecessors (not the stale planning
context), executed, and the context refreshed. The first validation or
execution failure halts the loop; the report carries the completed prefix
and signals a replan whenever fewer than k actions ran.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .domain import (
    ActionOutcome,
    ExecutionReport,
    HaltReason,
    Observation,
    Operation,
    PlannedAction,
    SpeculativeBatch,
)
from .puppeteer import ApiRegistry, validate_args
from .errors import SchemaViolation

ExecuteFn = Callable[[PlannedAction, Observation], ActionOutcome]
ObserveFn = Callable[[], Observation]
HookFn = Callable[[str, dict[str, Any]], None]


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None


def validate(
    action: PlannedAction,
    context: Observation,
    registry: ApiRegistry | None = None,
) -> ValidationResult:
    """Runtime precondition check against the current context.

    GUI actions require their target to be present, visible and enabled in
    the context. API calls are validated structurally: the API must be
    registered for the app and the arguments must satisfy its schema.
    """
    if action.operation is Operation.API_CALL:
        if registry is None:
            return ValidationResult(False, "NoRegistry")
        spec = registry.find(context.app_id, action.api_name)
        if spec is None:
            return ValidationResult(False, "ApiNotRegistered")
        try:
            validate_args(spec, dict(action.payload.get("args") or {}))
        except SchemaViolation as exc:
            return ValidationResult(False, f"SchemaViolation: {exc}")
        return ValidationResult(True)

    control = context.find(action.target or "")
    if control is None:
        return ValidationResult(False, "ControlMissing")
    if not control.visible:
        return ValidationResult(False, "ControlInvisible")
    if not control.enabled:
        return ValidationResult(False, "ControlDisabled")
    return ValidationResult(True)


def run_batch(
    batch: SpeculativeBatch,
    initial_context: Observation,
    execute: ExecuteFn,
    observe: ObserveFn,
    registry: ApiRegistry | None = None,
    hook: HookFn | None = None,
    cancelled: Callable[[], bool] | None = None,
) -> ExecutionReport:
    """Sequential validate-execute loop with early stop.

    `execute` performs one action (puppeteer), `observe` refreshes the UI
    context after each executed action, `hook` receives per-step trace
    payloads, and `cancelled` is polled between actions so cancellation
    never lands mid-action.
    """

    def emit(kind: str, payload: dict[str, Any]) -> None:
        if hook is not None:
            hook(kind, payload)

    context = initial_context
    executed: list[ActionOutcome] = []
    halt_reason = HaltReason.NONE
    halt_detail = ""

    for index, action in enumerate(batch.actions):
        if cancelled is not None and cancelled():
            halt_reason = HaltReason.EXECUTION_ERROR
            halt_detail = "cancelled"
            emit("validation", {"index": index, "ok": False, "reason": "cancelled"})
            break

        check = validate(action, context, registry)
        emit("validation", {"index": index, "ok": check.ok, "reason": check.reason})
        if not check.ok:
            halt_reason = HaltReason.VALIDATION_FAILED
            halt_detail = check.reason or "validation failed"
            break

        outcome = execute(action, context)
        emit("action_outcome", {"index": index, "outcome": outcome.to_json()})
        if outcome.is_error:
            halt_reason = HaltReason.EXECUTION_ERROR
            halt_detail = f"{outcome.error_code}: {outcome.message}"
            break

        executed.append(outcome)
        context = observe()

    report = ExecutionReport(
        batch=batch,
        executed=tuple(executed),
        halted_early=len(executed) < batch.k,
        halt_reason=halt_reason,
        final_context=context,
        halt_detail=halt_detail,
    )
    emit(
        "batch_report",
        {
            "executed_count": len(report.executed),
            "k": batch.k,
            "halted_early": report.halted_early,
            "halt_reason": report.halt_reason.value,
            "halt_detail": report.halt_detail,
            "replan": report.needs_replan,
        },
    )
    return report

"""Unified GUI/API action orchestrator.

GUI actions dispatch into the simulated desktop; api_call actions dispatch
to registered handlers after schema validation. When an API attempt fails
(missing binding, argument mismatch, handler error) and the planner has
supplied gui_fallback steps inside the action payload, those steps run as
ordinary GUI actions and the outcome is tagged fell_back=true. Argument
validation happens before any dispatch, so an API-path failure never
mutates desktop state.

Handlers take (desktop, app_id, args) and return a result map shaped like
{"results": ..., "error": None}; raising ApiHandlerError signals failure.
The registry manifest (JSON) declares specs without code changes::

    [{"name": "save_as", "app": "sheetapp",
      "description": "Save the sheet to a desired format",
      "args": [{"name": "format", "type": "string", "required": true}],
      "risk_tag": false, "handler": "simenv"}]
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .domain import ActionOutcome, Observation, Operation, PlannedAction
from .domain import ControlSource
from .errors import ApiHandlerError, DuplicateApi, SchemaViolation
from .simenv import Desktop

Handler = Callable[[Desktop, str, dict[str, Any]], dict[str, Any]]
EventSink = Callable[[str, dict[str, Any]], None]

_TYPE_CHECKS: dict[str, type | tuple[type, ...]] = {
    "string": str,
    "int": int,
    "number": (int, float),
    "bool": bool,
}


@dataclass(frozen=True)
class ArgSpec:
    name: str
    semantic_type: str = "string"
    required: bool = True

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ArgSpec":
        return cls(
            name=data["name"],
            semantic_type=data.get("type", "string"),
            required=data.get("required", True),
        )


@dataclass(frozen=True)
class ApiSpec:
    name: str
    app_binding: str
    argument_schema: tuple[ArgSpec, ...] = ()
    description: str = ""
    risk_tag: bool = False

    def __post_init__(self) -> None:
        names = [a.name for a in self.argument_schema]
        if len(set(names)) != len(names):
            raise ValueError(f"api {self.name!r}: duplicate argument names")

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "app": self.app_binding,
            "description": self.description,
            "args": [
                {"name": a.name, "type": a.semantic_type, "required": a.required}
                for a in self.argument_schema
            ],
            "risk_tag": self.risk_tag,
        }


def validate_args(spec: ApiSpec, args: dict[str, Any]) -> None:
    known = {a.name: a for a in spec.argument_schema}
    for name in args:
        if name not in known:
            raise SchemaViolation(f"api {spec.name!r}: unexpected argument {name!r}")
    for arg in spec.argument_schema:
        if arg.required and arg.name not in args:
            raise SchemaViolation(f"api {spec.name!r}: missing required argument {arg.name!r}")
        if arg.name in args:
            expected = _TYPE_CHECKS.get(arg.semantic_type)
            value = args[arg.name]
            if expected is not None and not isinstance(value, expected):
                raise SchemaViolation(
                    f"api {spec.name!r}: argument {arg.name!r} is not a {arg.semantic_type}"
                )
            if arg.semantic_type in ("int", "number") and isinstance(value, bool):
                raise SchemaViolation(
                    f"api {spec.name!r}: argument {arg.name!r} is not a {arg.semantic_type}"
                )


def simenv_handler(desktop: Desktop, app_id: str, args: dict[str, Any], *, api: str) -> dict[str, Any]:
    """Default handler: dispatch the call into the simulated app's effect
    rules. A call no rule accepts is a handler failure, not a silent no-op."""
    action = PlannedAction(operation=Operation.API_CALL, payload={"api": api, "args": args})
    outcome = desktop.apply_action(app_id, action)
    if outcome.status != "ok":
        raise ApiHandlerError(outcome.message or f"api {api!r} failed in {app_id}")
    return {"results": outcome.details.get("results", "ok"), "error": None}


@dataclass
class _Entry:
    spec: ApiSpec
    handler: Handler


class ApiRegistry:
    def __init__(self) -> None:
        self._entries: dict[tuple[str, str], _Entry] = {}

    def register(self, spec: ApiSpec, handler: Handler) -> ApiSpec:
        key = (spec.app_binding, spec.name)
        if key in self._entries:
            raise DuplicateApi(f"api {spec.name!r} already registered for {spec.app_binding!r}")
        self._entries[key] = _Entry(spec=spec, handler=handler)
        return spec

    def find(self, app_id: str | None, name: str | None) -> ApiSpec | None:
        if name is None:
            return None
        if app_id is not None:
            entry = self._entries.get((app_id, name))
            return entry.spec if entry else None
        for (_, api_name), entry in self._entries.items():
            if api_name == name:
                return entry.spec
        return None

    def handler_for(self, app_id: str, name: str) -> Handler | None:
        entry = self._entries.get((app_id, name))
        return entry.handler if entry else None

    def specs_for(self, app_id: str) -> list[ApiSpec]:
        return [e.spec for (app, _), e in self._entries.items() if app == app_id]

    def action_space(self, app_id: str) -> list[dict[str, Any]]:
        """Prompt-ready description of every API bound to an app."""
        return [spec.to_json() for spec in self.specs_for(app_id)]

    @classmethod
    def from_manifest(
        cls,
        source: str | Path | list[dict[str, Any]],
        resolvers: dict[str, Callable[[ApiSpec], Handler]] | None = None,
    ) -> "ApiRegistry":
        if isinstance(source, (str, Path)):
            data = json.loads(Path(source).read_text())
        else:
            data = source
        registry = cls()
        for item in data:
            spec = ApiSpec(
                name=item["name"],
                app_binding=item["app"],
                argument_schema=tuple(ArgSpec.from_json(a) for a in item.get("args", [])),
                description=item.get("description", ""),
                risk_tag=item.get("risk_tag", False),
            )
            handler_name = item.get("handler", "simenv")
            if handler_name == "simenv":
                handler = _bind_simenv_handler(spec.name)
            elif resolvers and handler_name in resolvers:
                handler = resolvers[handler_name](spec)
            else:
                raise ValueError(f"no handler resolver for {handler_name!r}")
            registry.register(spec, handler)
        return registry


def _bind_simenv_handler(api_name: str) -> Handler:
    def handler(desktop: Desktop, app_id: str, args: dict[str, Any]) -> dict[str, Any]:
        return simenv_handler(desktop, app_id, args, api=api_name)

    return handler


@dataclass
class Puppeteer:
    desktop: Desktop
    registry: ApiRegistry = field(default_factory=ApiRegistry)
    event_sink: EventSink | None = None

    def _emit(self, kind: str, payload: dict[str, Any]) -> None:
        if self.event_sink is not None:
            self.event_sink(kind, payload)

    def execute(self, action: PlannedAction, context: Observation) -> ActionOutcome:
        if action.operation is Operation.API_CALL:
            return self._execute_api(action, context)
        return self._execute_gui(action, context)

    # -- GUI path ------------------------------------------------------------

    def _execute_gui(self, action: PlannedAction, context: Observation) -> ActionOutcome:
        app_id = context.app_id
        dispatch = action
        control = context.find(action.target or "")
        if control is not None and control.source is ControlSource.VISION:
            resolved = self._resolve_pseudo(app_id, control)
            if resolved is None:
                return ActionOutcome(
                    action=action,
                    status="error",
                    error_code="ControlNotFound",
                    message=f"no underlying control at {control.box.center}",
                    executor_actions=0,
                )
            dispatch = PlannedAction(
                operation=action.operation,
                target=resolved,
                payload=action.payload,
                rationale=action.rationale,
            )
        raw = self.desktop.apply_action(app_id, dispatch)
        self._emit(
            "executor_action",
            {"app_id": app_id, "action": dispatch.to_json(), "via": "gui", "status": raw.status},
        )
        return ActionOutcome(
            action=action,
            status=raw.status,
            error_code=raw.error_code,
            message=raw.message,
            details=raw.details,
        )

    def _resolve_pseudo(self, app_id: str, control) -> str | None:
        x, y = control.box.center
        return self.desktop.hit_test(app_id, x, y)

    # -- API path ------------------------------------------------------------

    def _execute_api(self, action: PlannedAction, context: Observation) -> ActionOutcome:
        app_id = context.app_id
        name = action.api_name or ""
        args = dict(action.payload.get("args") or {})
        spec = self.registry.find(app_id, name)

        failure: tuple[str, str] | None = None
        details: dict[str, Any] = {}
        if spec is None:
            failure = ("ApiHandlerError", f"api {name!r} is not registered for {app_id!r}")
        else:
            try:
                validate_args(spec, args)
            except SchemaViolation as exc:
                failure = ("SchemaViolation", str(exc))
        if failure is None and spec is not None:
            handler = self.registry.handler_for(app_id, name)
            try:
                details = handler(self.desktop, app_id, args) or {}
            except ApiHandlerError as exc:
                failure = ("ApiHandlerError", str(exc))

        if failure is None:
            self._emit(
                "executor_action",
                {"app_id": app_id, "action": action.to_json(), "via": "api", "status": "ok"},
            )
            return ActionOutcome(action=action, status="ok", details=details)

        fallback_steps = action.payload.get("gui_fallback") or []
        if fallback_steps:
            return self._execute_fallback(action, context, failure, fallback_steps)
        return ActionOutcome(
            action=action,
            status="error",
            error_code=failure[0],
            message=failure[1],
            executor_actions=0,
        )

    def _execute_fallback(
        self,
        action: PlannedAction,
        context: Observation,
        failure: tuple[str, str],
        steps: list[dict[str, Any]],
    ) -> ActionOutcome:
        executed = 0
        for step in steps:
            gui_action = PlannedAction.from_json(step)
            raw = self.desktop.apply_action(context.app_id, gui_action)
            self._emit(
                "executor_action",
                {
                    "app_id": context.app_id,
                    "action": gui_action.to_json(),
                    "via": "gui_fallback",
                    "status": raw.status,
                },
            )
            executed += 1
            if raw.status == "error":
                return ActionOutcome(
                    action=action,
                    status="error",
                    error_code=raw.error_code,
                    message=f"gui fallback failed after api error ({failure[1]}): {raw.message}",
                    fell_back=True,
                    executor_actions=executed,
                )
        return ActionOutcome(
            action=action,
            status="ok",
            message=f"api failed ({failure[1]}); completed via gui fallback",
            fell_back=True,
            executor_actions=executed,
        )

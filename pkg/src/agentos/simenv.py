"""Deterministic simulated desktop.

Applications are loaded from JSON definitions (one file per app). Each app
is a flat window of controls plus a document-state key/value map; behavior
is expressed as effect rules: (trigger, precondition) -> ordered mutations.
Effect rules are the only mutation path, so identical action sequences from
the same catalog always produce identical state hashes.

App-definition schema::

    {
      "app_id": "sheetapp",
      "display_name": "Sheet App",
      "controls": [
        {"id": "file_menu", "control_type": "MenuItem", "label": "File",
         "box": [0, 0, 40, 20], "visible": true, "enabled": true,
         "custom_rendered": false}
      ],
      "effect_rules": [
        {"trigger": {"control": "file_menu", "operation": "click"},
         "precondition": {"key": "locked", "equals": false},   // optional
         "effects": [{"kind": "show", "controls": ["save_item"]}]}
      ],
      "exposed_apis": ["save_as"]
    }

Effect kinds: show / hide / enable / disable (controls), set_label,
set_state (document state; value literal or copied from the trigger payload
via "value_from_payload"), emit_error, crash, close.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .domain import (
    ActionOutcome,
    BoundingBox,
    Control,
    ControlSource,
    Operation,
    PlannedAction,
    canonical_json,
    digest,
)
from .errors import AppNotRunning, UnknownApp


@dataclass(frozen=True)
class ControlTemplate:
    id: str
    control_type: str
    label: str
    box: BoundingBox
    visible: bool = True
    enabled: bool = True
    custom_rendered: bool = False

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ControlTemplate":
        return cls(
            id=data["id"],
            control_type=data.get("control_type", "Button"),
            label=data.get("label", data["id"]),
            box=BoundingBox.from_json(data["box"]),
            visible=data.get("visible", True),
            enabled=data.get("enabled", True),
            custom_rendered=data.get("custom_rendered", False),
        )


@dataclass(frozen=True)
class EffectRule:
    trigger: dict[str, Any]
    effects: tuple[dict[str, Any], ...]
    precondition: dict[str, Any] | None = None

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "EffectRule":
        return cls(
            trigger=dict(data["trigger"]),
            effects=tuple(dict(e) for e in data["effects"]),
            precondition=dict(data["precondition"]) if data.get("precondition") else None,
        )

    def matches(self, action: PlannedAction, doc_state: dict[str, Any]) -> bool:
        trigger = self.trigger
        if "api" in trigger:
            if action.operation is not Operation.API_CALL:
                return False
            if action.payload.get("api") != trigger["api"]:
                return False
        else:
            if action.operation is Operation.API_CALL:
                return False
            if trigger.get("control") != action.target:
                return False
            if trigger.get("operation", action.operation.value) != action.operation.value:
                return False
        wanted = trigger.get("payload") or {}
        args = action.payload.get("args", {}) if action.operation is Operation.API_CALL else action.payload
        for key, expected in wanted.items():
            if args.get(key) != expected:
                return False
        return self._precondition_holds(doc_state)

    def _precondition_holds(self, doc_state: dict[str, Any]) -> bool:
        if not self.precondition:
            return True
        key = self.precondition["key"]
        if "equals" in self.precondition:
            return doc_state.get(key) == self.precondition["equals"]
        if "exists" in self.precondition:
            return (key in doc_state) == self.precondition["exists"]
        return True


@dataclass(frozen=True)
class AppDefinition:
    app_id: str
    display_name: str
    controls: tuple[ControlTemplate, ...]
    effect_rules: tuple[EffectRule, ...]
    exposed_apis: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = [c.id for c in self.controls]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.app_id}: duplicate control ids")
        known = set(ids)
        for rule in self.effect_rules:
            ref = rule.trigger.get("control")
            if ref is not None and ref not in known:
                raise ValueError(f"{self.app_id}: rule triggers on unknown control {ref!r}")
            api = rule.trigger.get("api")
            if api is not None and api not in self.exposed_apis:
                raise ValueError(f"{self.app_id}: rule triggers on unexposed api {api!r}")
            for effect in rule.effects:
                for cid in _effect_control_ids(effect):
                    if cid not in known:
                        raise ValueError(f"{self.app_id}: effect references unknown control {cid!r}")

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "AppDefinition":
        return cls(
            app_id=data["app_id"],
            display_name=data.get("display_name", data["app_id"]),
            controls=tuple(ControlTemplate.from_json(c) for c in data.get("controls", [])),
            effect_rules=tuple(EffectRule.from_json(r) for r in data.get("effect_rules", [])),
            exposed_apis=tuple(data.get("exposed_apis", [])),
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "display_name": self.display_name,
            "controls": [
                {
                    "id": c.id,
                    "control_type": c.control_type,
                    "label": c.label,
                    "box": c.box.to_json(),
                    "visible": c.visible,
                    "enabled": c.enabled,
                    "custom_rendered": c.custom_rendered,
                }
                for c in self.controls
            ],
            "effect_rules": [
                {
                    "trigger": r.trigger,
                    "precondition": r.precondition,
                    "effects": list(r.effects),
                }
                for r in self.effect_rules
            ],
            "exposed_apis": list(self.exposed_apis),
        }


def _effect_control_ids(effect: dict[str, Any]) -> Iterable[str]:
    if "control" in effect:
        yield effect["control"]
    for cid in effect.get("controls", []):
        yield cid


@dataclass
class _ControlState:
    visible: bool
    enabled: bool
    label: str


@dataclass
class AppInstance:
    definition: AppDefinition
    controls: dict[str, _ControlState] = field(default_factory=dict)
    doc_state: dict[str, Any] = field(default_factory=dict)
    crashed: bool = False

    def __post_init__(self) -> None:
        if not self.controls:
            self.controls = {
                t.id: _ControlState(visible=t.visible, enabled=t.enabled, label=t.label)
                for t in self.definition.controls
            }

    def control(self, control_id: str) -> Control | None:
        template = next((t for t in self.definition.controls if t.id == control_id), None)
        if template is None:
            return None
        state = self.controls[control_id]
        return Control(
            id=template.id,
            source=ControlSource.ACCESSIBILITY,
            control_type=template.control_type,
            label=state.label,
            box=template.box,
            visible=state.visible,
            enabled=state.enabled,
        )

    def state_json(self) -> dict[str, Any]:
        return {
            "controls": {
                cid: {"visible": s.visible, "enabled": s.enabled, "label": s.label}
                for cid, s in sorted(self.controls.items())
            },
            "doc_state": {k: self.doc_state[k] for k in sorted(self.doc_state)},
            "crashed": self.crashed,
        }


class Catalog:
    """Immutable set of app definitions, usually loaded from a directory."""

    def __init__(self, definitions: Iterable[AppDefinition]):
        self.apps: dict[str, AppDefinition] = {}
        for definition in definitions:
            if definition.app_id in self.apps:
                raise ValueError(f"duplicate app definition {definition.app_id!r}")
            self.apps[definition.app_id] = definition
        self.digest = digest({app_id: d.to_json() for app_id, d in self.apps.items()})

    @classmethod
    def load(cls, directory: str | Path) -> "Catalog":
        directory = Path(directory)
        definitions = []
        for path in sorted(directory.glob("*.json")):
            definitions.append(AppDefinition.from_json(json.loads(path.read_text())))
        return cls(definitions)


class Desktop:
    """One simulated desktop: running app instances plus an artifact store."""

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.running_apps: dict[str, AppInstance] = {}
        self.focused_app: str | None = None
        self.tick = 0
        self.artifacts: dict[str, str] = {}

    # -- lifecycle ---------------------------------------------------------

    def is_running(self, app_id: str) -> bool:
        instance = self.running_apps.get(app_id)
        return instance is not None and not instance.crashed

    def launch_app(self, app_id: str) -> AppInstance:
        existing = self.running_apps.get(app_id)
        if existing is not None and not existing.crashed:
            return existing
        definition = self.catalog.apps.get(app_id)
        if definition is None:
            raise UnknownApp(f"app {app_id!r} is not in the catalog")
        instance = AppInstance(definition=definition)
        self.running_apps[app_id] = instance
        self.focused_app = app_id
        self.tick += 1
        return instance

    def _require_running(self, app_id: str) -> AppInstance:
        instance = self.running_apps.get(app_id)
        if instance is None or instance.crashed:
            raise AppNotRunning(f"app {app_id!r} is not running")
        return instance

    # -- perception --------------------------------------------------------

    def snapshot(self, app_id: str) -> tuple[list[Control], str]:
        """Raw accessibility dump (custom-rendered controls withheld) plus a
        screenshot artifact handle resolving to the rendered layout."""
        instance = self._require_running(app_id)
        dump = [
            instance.control(t.id)
            for t in instance.definition.controls
            if not t.custom_rendered
        ]
        dump = [c for c in dump if c is not None]
        ref = f"shot-{app_id}-{self.tick:06d}"
        if ref not in self.artifacts:
            layout = [c.to_json() for c in self.visible_controls(app_id)]
            self.artifacts[ref] = canonical_json({"app_id": app_id, "layout": layout})
        return dump, ref

    def vision_truth(self, app_id: str) -> list[dict[str, Any]]:
        """Ground-truth stream for the fixture vision detector: currently
        visible custom-rendered controls."""
        instance = self._require_running(app_id)
        out = []
        for template in instance.definition.controls:
            if not template.custom_rendered:
                continue
            state = instance.controls[template.id]
            if state.visible:
                out.append(
                    {
                        "control_type": template.control_type,
                        "box": template.box.to_json(),
                        "source_control": template.id,
                    }
                )
        return out

    def visible_controls(self, app_id: str) -> list[Control]:
        instance = self._require_running(app_id)
        controls = []
        for template in instance.definition.controls:
            state = instance.controls[template.id]
            if state.visible:
                control = instance.control(template.id)
                if control is not None:
                    controls.append(control)
        return controls

    def hit_test(self, app_id: str, x: int, y: int) -> str | None:
        """Topmost visible control at a point: smallest containing box wins,
        ties broken by latest definition order."""
        instance = self._require_running(app_id)
        best: tuple[int, int] | None = None
        best_id: str | None = None
        for index, template in enumerate(instance.definition.controls):
            if not instance.controls[template.id].visible:
                continue
            if template.box.contains(x, y):
                key = (template.box.area, -index)
                if best is None or key < best:
                    best = key
                    best_id = template.id
        return best_id

    # -- mutation ----------------------------------------------------------

    def apply_action(self, app_id: str, action: PlannedAction) -> ActionOutcome:
        instance = self._require_running(app_id)

        if action.operation is not Operation.API_CALL:
            target = action.target or ""
            state = instance.controls.get(target)
            if state is None or not state.visible:
                return ActionOutcome(
                    action=action,
                    status="error",
                    error_code="ControlNotFound",
                    message=f"control {target!r} not present",
                )
            if not state.enabled:
                return ActionOutcome(
                    action=action,
                    status="error",
                    error_code="ControlDisabled",
                    message=f"control {target!r} is disabled",
                )

        for rule in instance.definition.effect_rules:
            if rule.matches(action, instance.doc_state):
                return self._apply_effects(app_id, instance, action, rule)

        return ActionOutcome(
            action=action,
            status="no_op",
            error_code="NoMatchingRule",
            message="no effect rule matched; action swallowed",
        )

    def _apply_effects(
        self,
        app_id: str,
        instance: AppInstance,
        action: PlannedAction,
        rule: EffectRule,
    ) -> ActionOutcome:
        # the tick advances only when effects actually apply, so swallowed
        # clicks and failed attempts leave the state (and its hash) untouched
        self.tick += 1
        payload = action.payload.get("args", {}) if action.operation is Operation.API_CALL else action.payload
        error: tuple[str, str] | None = None
        for effect in rule.effects:
            kind = effect["kind"]
            if kind in ("show", "hide", "enable", "disable"):
                for cid in _effect_control_ids(effect):
                    state = instance.controls[cid]
                    if kind == "show":
                        state.visible = True
                    elif kind == "hide":
                        state.visible = False
                    elif kind == "enable":
                        state.enabled = True
                    else:
                        state.enabled = False
            elif kind == "set_label":
                value = effect.get("label")
                if "label_from_payload" in effect:
                    value = str(payload.get(effect["label_from_payload"], ""))
                instance.controls[effect["control"]].label = value or ""
            elif kind == "set_state":
                value = effect.get("value")
                if "value_from_payload" in effect:
                    value = payload.get(effect["value_from_payload"])
                instance.doc_state[effect["key"]] = value
            elif kind == "emit_error":
                error = ("EmittedError", effect.get("message", "application error"))
            elif kind == "crash":
                instance.crashed = True
                error = ("AppCrashed", effect.get("message", "application crashed"))
            elif kind == "close":
                del self.running_apps[app_id]
                if self.focused_app == app_id:
                    self.focused_app = None
            else:
                raise ValueError(f"unknown effect kind {kind!r}")

        if error is not None:
            return ActionOutcome(
                action=action, status="error", error_code=error[0], message=error[1]
            )
        return ActionOutcome(action=action, status="ok")

    # -- hashing -----------------------------------------------------------

    def state_json(self) -> dict[str, Any]:
        return {
            "running_apps": {
                app_id: inst.state_json() for app_id, inst in sorted(self.running_apps.items())
            },
            "focused_app": self.focused_app,
            "tick": self.tick,
        }

    def state_hash(self) -> str:
        return digest(self.state_json())

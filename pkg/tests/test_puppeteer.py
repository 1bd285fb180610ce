"""Unified GUI/API orchestrator: registry, schema validation, fallback."""
import pytest

from agentos import fixtures
from agentos.detection import FixtureVisionDetector, observe
from agentos.domain import Operation, PlannedAction
from agentos.errors import ApiHandlerError, DuplicateApi, SchemaViolation
from agentos.puppeteer import ApiRegistry, ApiSpec, ArgSpec, Puppeteer, validate_args


def api_action(name: str, args: dict | None = None, fallback: list | None = None) -> PlannedAction:
    payload = {"api": name, "args": args or {}}
    if fallback is not None:
        payload["gui_fallback"] = fallback
    return PlannedAction(operation=Operation.API_CALL, payload=payload)


@pytest.fixture
def registry() -> ApiRegistry:
    return ApiRegistry.from_manifest(fixtures.API_MANIFEST)


@pytest.fixture
def sheet_setup(desktop, registry):
    desktop.launch_app("sheetapp")
    events = []
    puppeteer = Puppeteer(desktop, registry, event_sink=lambda k, p: events.append((k, p)))
    observation, _ = observe(desktop, "sheetapp")
    return desktop, puppeteer, observation, events


class TestRegistry:
    def test_manifest_declares_all_office_apis(self, registry):
        names = {(s.app_binding, s.name) for app in ("docapp", "sheetapp", "slideapp") for s in registry.specs_for(app)}
        assert ("docapp", "select_text") in names
        assert ("docapp", "select_paragraph") in names
        assert ("docapp", "set_font") in names
        assert ("sheetapp", "insert_excel_table") in names
        assert ("sheetapp", "select_table_range") in names
        assert ("sheetapp", "reorder_column") in names
        assert ("slideapp", "set_background_color") in names
        assert {(app, "save_as") for app in ("docapp", "sheetapp", "slideapp")} <= names

    def test_duplicate_registration_rejected(self, registry):
        spec = registry.specs_for("sheetapp")[0]
        with pytest.raises(DuplicateApi):
            registry.register(spec, lambda d, a, args: {})

    def test_action_space_lists_each_spec_once(self, registry):
        space = registry.action_space("sheetapp")
        names = [entry["name"] for entry in space]
        assert sorted(names) == sorted(set(names))
        save_as = next(e for e in space if e["name"] == "save_as")
        assert save_as["args"] == [{"name": "format", "type": "string", "required": True}]

    def test_app_without_apis_has_empty_action_space(self, registry):
        assert registry.action_space("no_such_app") == []

    def test_unknown_handler_resolver_rejected(self):
        with pytest.raises(ValueError):
            ApiRegistry.from_manifest(
                [{"name": "x", "app": "a", "args": [], "handler": "mystery"}]
            )


class TestValidateArgs:
    def test_missing_required(self):
        spec = ApiSpec("save_as", "sheetapp", (ArgSpec("format"),))
        with pytest.raises(SchemaViolation):
            validate_args(spec, {})

    def test_unknown_argument(self):
        spec = ApiSpec("save_as", "sheetapp", (ArgSpec("format"),))
        with pytest.raises(SchemaViolation):
            validate_args(spec, {"format": "csv", "extra": 1})

    def test_type_mismatch(self):
        spec = ApiSpec("select_paragraph", "docapp", (ArgSpec("index", "int"),))
        with pytest.raises(SchemaViolation):
            validate_args(spec, {"index": "three"})
        with pytest.raises(SchemaViolation):
            validate_args(spec, {"index": True})
        validate_args(spec, {"index": 3})

    def test_optional_argument(self):
        spec = ApiSpec("set_font", "docapp", (ArgSpec("font"), ArgSpec("size", "int", required=False)))
        validate_args(spec, {"font": "Arial"})
        validate_args(spec, {"font": "Arial", "size": 12})


class TestExecuteApi:
    def test_api_success_single_executor_action(self, sheet_setup):
        desktop, puppeteer, observation, events = sheet_setup
        outcome = puppeteer.execute(api_action("save_as", {"format": "csv"}), observation)
        assert outcome.status == "ok"
        assert not outcome.fell_back
        assert desktop.running_apps["sheetapp"].doc_state["saved_format"] == "csv"
        assert [k for k, _ in events] == ["executor_action"]
        assert events[0][1]["via"] == "api"

    def test_schema_violation_leaves_state_unchanged(self, sheet_setup):
        desktop, puppeteer, observation, events = sheet_setup
        before = desktop.state_hash()
        outcome = puppeteer.execute(api_action("save_as", {}), observation)
        assert outcome.status == "error"
        assert outcome.error_code == "SchemaViolation"
        assert outcome.executor_actions == 0
        assert desktop.state_hash() == before
        assert events == []

    def test_unregistered_api_without_fallback_errors(self, sheet_setup):
        _, puppeteer, observation, _ = sheet_setup
        outcome = puppeteer.execute(api_action("mystery_api"), observation)
        assert outcome.status == "error"
        assert outcome.error_code == "ApiHandlerError"

    def test_unregistered_api_with_fallback_executes_gui_steps(self, sheet_setup):
        desktop, puppeteer, observation, events = sheet_setup
        fallback = [
            {"operation": "click", "target": "file_menu", "payload": {}, "rationale": ""},
            {"operation": "click", "target": "save_as_item", "payload": {}, "rationale": ""},
            {"operation": "click", "target": "format_dropdown", "payload": {}, "rationale": ""},
            {"operation": "click", "target": "csv_option", "payload": {}, "rationale": ""},
            {"operation": "click", "target": "save_button", "payload": {}, "rationale": ""},
        ]
        outcome = puppeteer.execute(api_action("mystery_export", fallback=fallback), observation)
        assert outcome.status == "ok"
        assert outcome.fell_back
        assert outcome.executor_actions == 5
        assert desktop.running_apps["sheetapp"].doc_state["saved_format"] == "csv"
        assert [p["via"] for _, p in events] == ["gui_fallback"] * 5

    def test_handler_error_with_fallback(self, desktop, registry):
        desktop.launch_app("fileman")
        puppeteer = Puppeteer(desktop, registry)
        observation, _ = observe(desktop, "fileman")
        fallback = [{"operation": "click", "target": "scratch_entry", "payload": {}, "rationale": ""}]
        outcome = puppeteer.execute(
            api_action("archive_file", {"path": "scratch.txt"}, fallback=fallback), observation
        )
        assert outcome.status == "ok" and outcome.fell_back
        assert desktop.running_apps["fileman"].doc_state["opened"] == "scratch.txt"

    def test_failing_fallback_step_reports_error(self, sheet_setup):
        _, puppeteer, observation, _ = sheet_setup
        fallback = [{"operation": "click", "target": "ghost", "payload": {}, "rationale": ""}]
        outcome = puppeteer.execute(api_action("mystery_api", fallback=fallback), observation)
        assert outcome.status == "error"
        assert outcome.fell_back
        assert outcome.error_code == "ControlNotFound"

    def test_simenv_handler_raises_on_unmatched_call(self, desktop, registry):
        desktop.launch_app("fileman")
        handler = registry.handler_for("fileman", "archive_file")
        with pytest.raises(ApiHandlerError):
            handler(desktop, "fileman", {"path": "scratch.txt"})


class TestExecuteGui:
    def test_gui_dispatch(self, sheet_setup):
        desktop, puppeteer, observation, events = sheet_setup
        outcome = puppeteer.execute(PlannedAction(operation=Operation.CLICK, target="file_menu"), observation)
        assert outcome.status == "ok"
        assert events[0][1]["via"] == "gui"

    def test_error_outcomes_pass_through(self, sheet_setup):
        _, puppeteer, observation, _ = sheet_setup
        outcome = puppeteer.execute(PlannedAction(operation=Operation.CLICK, target="locked_cell"), observation)
        assert outcome.error_code == "ControlDisabled"

    def test_pseudo_control_click_resolves_by_hit_test(self, desktop, registry):
        desktop.launch_app("slideapp")
        puppeteer = Puppeteer(desktop, registry)
        observation, _ = observe(desktop, "slideapp", FixtureVisionDetector(desktop))
        pseudo = observation.find("vis-0")
        assert pseudo is not None
        outcome = puppeteer.execute(PlannedAction(operation=Operation.CLICK, target="vis-0"), observation)
        assert outcome.status == "ok"
        assert desktop.running_apps["slideapp"].doc_state["brush_used"] is True

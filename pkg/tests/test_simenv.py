"""Simulated desktop: lifecycle, effect rules, determinism, hashing."""
import random

import pytest

from agentos.domain import Operation, PlannedAction
from agentos.errors import AppNotRunning, UnknownApp
from agentos.simenv import AppDefinition, Catalog, Desktop


def click(target: str) -> PlannedAction:
    return PlannedAction(operation=Operation.CLICK, target=target)


def api(name: str, **args) -> PlannedAction:
    return PlannedAction(operation=Operation.API_CALL, payload={"api": name, "args": args})


class TestLifecycle:
    def test_launch_loads_initial_tree(self, desktop):
        desktop.launch_app("sheetapp")
        assert "sheetapp" in desktop.running_apps
        dump, _ = desktop.snapshot("sheetapp")
        assert any(c.id == "file_menu" for c in dump)

    def test_launch_is_idempotent(self, desktop):
        first = desktop.launch_app("sheetapp")
        second = desktop.launch_app("sheetapp")
        assert first is second

    def test_unknown_app(self, desktop):
        with pytest.raises(UnknownApp):
            desktop.launch_app("nonexistent")

    def test_crashed_app_not_running(self, desktop):
        desktop.launch_app("fileman")
        outcome = desktop.apply_action("fileman", click("crash_button"))
        assert outcome.error_code == "AppCrashed"
        assert not desktop.is_running("fileman")
        with pytest.raises(AppNotRunning):
            desktop.snapshot("fileman")

    def test_relaunch_after_crash_gets_fresh_instance(self, desktop):
        desktop.launch_app("fileman")
        desktop.apply_action("fileman", click("scratch_entry"))
        desktop.apply_action("fileman", click("crash_button"))
        fresh = desktop.launch_app("fileman")
        assert not fresh.crashed
        assert fresh.doc_state == {}
        assert desktop.is_running("fileman")


class TestApplyAction:
    def test_rule_mutation(self, desktop):
        desktop.launch_app("sheetapp")
        outcome = desktop.apply_action("sheetapp", click("file_menu"))
        assert outcome.status == "ok"
        dump, _ = desktop.snapshot("sheetapp")
        save_item = next(c for c in dump if c.id == "save_as_item")
        assert save_item.visible

    def test_disabled_control(self, desktop):
        desktop.launch_app("sheetapp")
        outcome = desktop.apply_action("sheetapp", click("locked_cell"))
        assert outcome.status == "error"
        assert outcome.error_code == "ControlDisabled"

    def test_missing_control(self, desktop):
        desktop.launch_app("sheetapp")
        outcome = desktop.apply_action("sheetapp", click("no_such_control"))
        assert outcome.error_code == "ControlNotFound"

    def test_hidden_control_not_clickable(self, desktop):
        desktop.launch_app("sheetapp")
        outcome = desktop.apply_action("sheetapp", click("save_as_item"))
        assert outcome.error_code == "ControlNotFound"

    def test_unmatched_action_is_noop(self, desktop):
        desktop.launch_app("fileman")
        outcome = desktop.apply_action("fileman", click("file_list"))
        assert outcome.status == "no_op"
        assert outcome.error_code == "NoMatchingRule"

    def test_api_call_sets_document_state(self, desktop):
        desktop.launch_app("sheetapp")
        outcome = desktop.apply_action("sheetapp", api("save_as", format="csv"))
        assert outcome.status == "ok"
        assert desktop.running_apps["sheetapp"].doc_state["saved_format"] == "csv"

    def test_payload_copied_into_state(self, desktop):
        desktop.launch_app("fileman")
        action = PlannedAction(
            operation=Operation.TYPE_TEXT, target="notes_field", payload={"text": "hello"}
        )
        desktop.apply_action("fileman", action)
        assert desktop.running_apps["fileman"].doc_state["note_text"] == "hello"

    def test_precondition_gates_rule(self, desktop):
        desktop.launch_app("sheetapp")
        for target in ("file_menu", "save_as_item"):
            desktop.apply_action("sheetapp", click(target))
        # save without selecting a format: no rule matches
        outcome = desktop.apply_action("sheetapp", click("save_button"))
        assert outcome.status == "no_op"
        desktop.apply_action("sheetapp", click("format_dropdown"))
        desktop.apply_action("sheetapp", click("csv_option"))
        outcome = desktop.apply_action("sheetapp", click("save_button"))
        assert outcome.status == "ok"
        assert desktop.running_apps["sheetapp"].doc_state["saved_format"] == "csv"

    def test_only_target_app_mutated(self, desktop):
        desktop.launch_app("sheetapp")
        desktop.launch_app("fileman")
        before = desktop.running_apps["fileman"].state_json()
        desktop.apply_action("sheetapp", click("file_menu"))
        assert desktop.running_apps["fileman"].state_json() == before


class TestSnapshot:
    def test_custom_rendered_withheld(self, desktop):
        desktop.launch_app("slideapp")
        dump, _ = desktop.snapshot("slideapp")
        assert all(c.id != "brush_tool" for c in dump)
        truth = desktop.vision_truth("slideapp")
        assert [t["source_control"] for t in truth] == ["brush_tool"]

    def test_standard_app_has_empty_vision_stream(self, desktop):
        desktop.launch_app("sheetapp")
        assert desktop.vision_truth("sheetapp") == []

    def test_snapshot_is_read_only(self, desktop):
        desktop.launch_app("sheetapp")
        before = desktop.state_hash()
        desktop.snapshot("sheetapp")
        desktop.vision_truth("sheetapp")
        desktop.visible_controls("sheetapp")
        assert desktop.state_hash() == before

    def test_hit_test_prefers_smallest_box(self, desktop):
        desktop.launch_app("fileman")
        # scratch_entry sits inside file_list; the item wins
        assert desktop.hit_test("fileman", 10, 30) == "scratch_entry"
        assert desktop.hit_test("fileman", 10, 290) == "file_list"
        assert desktop.hit_test("fileman", 500, 500) is None


class TestStateHash:
    def test_hash_deterministic(self, desktop):
        desktop.launch_app("sheetapp")
        assert desktop.state_hash() == desktop.state_hash()

    def test_identical_histories_identical_hashes(self, catalog):
        def run() -> str:
            desktop = Desktop(catalog)
            desktop.launch_app("sheetapp")
            desktop.apply_action("sheetapp", click("file_menu"))
            desktop.apply_action("sheetapp", api("save_as", format="csv"))
            return desktop.state_hash()

        assert run() == run()

    def test_label_mutations_change_hash(self, catalog):
        rng = random.Random(20240817)
        base = AppDefinition.from_json(
            {
                "app_id": "tiny",
                "display_name": "Tiny",
                "controls": [
                    {"id": f"c{i}", "control_type": "Button", "label": f"L{i}", "box": [i, 0, i + 1, 1]}
                    for i in range(10)
                ],
                "effect_rules": [
                    {
                        "trigger": {"control": f"c{i}", "operation": "type_text"},
                        "effects": [{"kind": "set_label", "control": f"c{i}", "label_from_payload": "text"}],
                    }
                    for i in range(10)
                ],
                "exposed_apis": [],
            }
        )
        tiny_catalog = Catalog([base])
        for _ in range(100):
            a, b = Desktop(tiny_catalog), Desktop(tiny_catalog)
            a.launch_app("tiny")
            b.launch_app("tiny")
            target = f"c{rng.randrange(10)}"
            action = PlannedAction(
                operation=Operation.TYPE_TEXT,
                target=target,
                payload={"text": f"mutated-{rng.randrange(10 ** 6)}"},
            )
            a.apply_action("tiny", action)
            b.apply_action(
                "tiny",
                PlannedAction(operation=Operation.TYPE_TEXT, target=target, payload={"text": "other"}),
            )
            assert a.state_hash() != b.state_hash()

    def test_catalog_digest_stable(self, catalog):
        from agentos import fixtures

        assert catalog.digest == Catalog.load(fixtures.CATALOG_DIR).digest


class TestDefinitionValidation:
    def test_rule_referencing_unknown_control_rejected(self):
        with pytest.raises(ValueError):
            AppDefinition.from_json(
                {
                    "app_id": "bad",
                    "controls": [{"id": "a", "box": [0, 0, 1, 1]}],
                    "effect_rules": [
                        {"trigger": {"control": "missing", "operation": "click"}, "effects": []}
                    ],
                }
            )

    def test_rule_referencing_unexposed_api_rejected(self):
        with pytest.raises(ValueError):
            AppDefinition.from_json(
                {
                    "app_id": "bad",
                    "controls": [],
                    "effect_rules": [{"trigger": {"api": "ghost"}, "effects": []}],
                    "exposed_apis": [],
                }
            )

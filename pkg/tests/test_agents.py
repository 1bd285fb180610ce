"""Agent loop mechanics: budget, safeguard gating, shims, isolation."""
import pytest

from agentos import fixtures
from agentos.appagent import AgentRegistry, AppAgent
from agentos.domain import AppState, HostState
from agentos.errors import NotPending, UnknownApp
from agentos.runtime import Decision, QueueGate
from agentos.session import Scenario, build_session
from conftest import make_config, run_scenario


def events_of(session, kind, round_index=None):
    return [
        e
        for e in session.events.all_events()
        if e["kind"] == kind and (round_index is None or e["round"] == round_index)
    ]


class TestBudget:
    def test_fail_at_exactly_max_steps(self):
        session, round_ = run_scenario("budget_runaway", max_steps=7)
        assert round_.outcome["fail_reason"] == "BudgetExhausted"
        assert round_.outcome["counts"]["planner_calls_app"] == 7

    def test_generous_budget_is_not_consumed(self):
        session, round_ = run_scenario("save_as_api")
        assert round_.outcome["counts"]["planner_calls_app"] == 1
        assert round_.outcome["verdict"] == "success"

    def test_every_planner_call_carries_observation_hash(self):
        session, _ = run_scenario("save_as_gui")
        for event in events_of(session, "planner_call"):
            if event["payload"]["role"] == "app":
                assert len(event["payload"]["observation_hash"]) == 64


class TestSafeguardFlow:
    def test_approve_path_executes_after_confirmation(self):
        gate = QueueGate([Decision(approve=True)])
        session, round_ = run_scenario("risky_delete", gate=gate)
        assert round_.outcome["verdict"] == "success"
        events = session.events.all_events()
        order = [e["kind"] for e in events]
        confirm_at = order.index("confirmation")
        exec_at = order.index("executor_action")
        assert order.index("confirmation_requested") < confirm_at < exec_at
        assert session.desktop.running_apps["fileman"].doc_state["deleted_path"] == "scratch.txt"

    def test_deny_path_aborts_and_replans(self):
        gate = QueueGate([Decision(approve=False)])
        session, round_ = run_scenario("risky_delete", gate=gate)
        assert round_.outcome["verdict"] == "failure"
        assert round_.outcome["status"] == "finished"  # planner gave up politely
        assert events_of(session, "executor_action") == []
        aborted = events_of(session, "action_aborted")
        assert len(aborted) == 1
        assert aborted[0]["payload"]["reason"] == "denied"
        assert "deleted_path" not in session.desktop.running_apps["fileman"].doc_state

    def test_auto_approve_recorded_in_trace(self):
        session, round_ = run_scenario("risky_delete")  # conftest defaults auto_approve
        assert round_.outcome["verdict"] == "success"
        confirmations = events_of(session, "confirmation")
        assert confirmations and confirmations[0]["payload"]["auto"] is True

    def test_pending_state_transition_sequence(self):
        gate = QueueGate([Decision(approve=True)])
        session, _ = run_scenario("risky_delete", gate=gate)
        transitions = [
            (e["payload"]["from"], e["payload"]["to"])
            for e in events_of(session, "app_transition")
        ]
        assert ("CONTINUE", "PENDING") in transitions
        assert ("PENDING", "CONTINUE") in transitions

    def test_every_action_screened(self):
        session, _ = run_scenario("save_as_gui")
        planned = 0
        for event in events_of(session, "app_output"):
            batch = event["payload"]["output"].get("batch")
            planned += len(batch["actions"]) if batch else 0
        assert len(events_of(session, "safeguard")) == planned

    def test_resume_without_pending_raises(self, desktop):
        config = make_config()
        scenario = Scenario.load(fixtures.SCENARIOS_DIR / "save_as_api.json")
        session = build_session(config, scenario=scenario)
        agent = AppAgent("sheetapp", session.services)
        with pytest.raises(NotPending):
            agent.resume(Decision(approve=True))


class TestHostAgent:
    def test_empty_request_rejected_before_planner(self):
        config = make_config()
        scenario = Scenario.load(fixtures.SCENARIOS_DIR / "save_as_api.json")
        session = build_session(config, scenario=scenario)
        from agentos.hostagent import HostAgent

        host = HostAgent(session.services)
        with pytest.raises(ValueError):
            host.decompose("", [])
        assert events_of(session, "planner_call") == []

    def test_ambiguous_request_pends_then_resolves(self):
        session, round_ = run_scenario("ambiguous")
        assert round_.outcome["verdict"] == "success"
        transitions = [
            (e["payload"]["from"], e["payload"]["to"])
            for e in events_of(session, "host_transition")
        ]
        assert ("CONTINUE", "PENDING") in transitions
        assert ("PENDING", "CONTINUE") in transitions
        assert len(events_of(session, "user_prompt")) == 1
        # clarified request fed back through the planner
        host_calls = [e for e in events_of(session, "planner_call") if e["payload"]["role"] == "host"]
        assert len(host_calls) == 2
        assert "clarification: scratch.txt" in host_calls[1]["payload"]["request"]

    def test_app_launched_exactly_once(self):
        session, _ = run_scenario("save_as_gui")
        launches = events_of(session, "app_launched")
        assert [e["payload"]["app_id"] for e in launches] == ["sheetapp"]

    def test_unknown_target_app_fails_round(self):
        fixture = {
            "host": {
                "do the impossible": {
                    "subtask_plan": {
                        "origin_request": "do the impossible",
                        "subtasks": [{"description": "x", "target_app": "ghostapp", "depends_on": []}],
                    },
                    "shell_commands": [],
                    "assigned_app": {"app_id": "ghostapp", "instance": 0},
                    "agent_message": "",
                    "user_prompt": None,
                    "status": "ASSIGN",
                }
            },
            "app": {},
        }
        from agentos.planner import Planner, ScriptedBackend

        config = make_config()
        session = build_session(config, planner=Planner(ScriptedBackend(fixture)))
        round_ = session.run_round("do the impossible")
        assert round_.status == "failed"
        assert "UnknownApp" in round_.outcome["fail_reason"]

    def test_host_terminal_state_after_success(self):
        session, _ = run_scenario("save_as_api")
        transitions = events_of(session, "host_transition")
        assert transitions[-1]["payload"]["to"] == HostState.FINISH.value

    def test_agents_released_at_finish(self):
        from agentos.hostagent import HostAgent
        from agentos.planner import Planner, ScriptedBackend

        config = make_config()
        scenario = Scenario.load(fixtures.SCENARIOS_DIR / "save_as_api.json")
        session = build_session(config, scenario=scenario)
        host = HostAgent(session.services)
        result = host.run_round(scenario.request)
        assert result.succeeded
        assert host.active_agents == {}

    def test_failure_isolation_other_apps_untouched(self):
        crash_fixture = {
            "host": {
                "crash the file manager": {
                    "subtask_plan": {
                        "origin_request": "crash the file manager",
                        "subtasks": [
                            {"description": "open the sheet", "target_app": "sheetapp", "depends_on": []},
                            {"description": "press the bad button", "target_app": "fileman", "depends_on": [0]},
                        ],
                    },
                    "shell_commands": [],
                    "assigned_app": {"app_id": "sheetapp", "instance": 0},
                    "agent_message": "",
                    "user_prompt": None,
                    "status": "ASSIGN",
                }
            },
            "app": {
                "open the sheet": {
                    "batch": [{"operation": "click", "target": "file_menu", "payload": {}, "rationale": ""}],
                    "rationale": "", "status": "FINISH", "blackboard_updates": [],
                },
                "press the bad button": {
                    "batch": [{"operation": "click", "target": "crash_button", "payload": {}, "rationale": ""}],
                    "rationale": "", "status": "CONTINUE", "blackboard_updates": [],
                },
            },
        }
        from agentos.planner import Planner, ScriptedBackend

        config = make_config()
        session = build_session(config, planner=Planner(ScriptedBackend(crash_fixture)))
        before_hash_fn = lambda: session.desktop.running_apps["sheetapp"].state_json()
        round_ = session.run_round("crash the file manager")
        sheet_after = before_hash_fn()
        assert round_.status == "failed"
        assert not session.desktop.is_running("fileman")
        # the sheet still has its post-subtask-1 state; the crash never touched it
        assert sheet_after["controls"]["save_as_item"]["visible"] is True
        failed = events_of(session, "subtask_finished")[-1]
        assert failed["payload"]["state"] == AppState.FAIL.value


class TestExternalShim:
    def test_adapter_driven_agent_completes_subtask(self):
        def adapter(subtask, observation, context):
            return {
                "batch": [
                    {"operation": "click", "target": "paste_button", "payload": {}, "rationale": "shim"}
                ],
                "rationale": "external agent decided",
                "status": "FINISH",
                "blackboard_updates": [{"kind": "insight", "body": {"by": "shim"}}],
            }

        registry = AgentRegistry()
        registry.register_external("slideapp", adapter)
        fixture = {
            "host": {
                "paste via the external agent": {
                    "subtask_plan": {
                        "origin_request": "paste via the external agent",
                        "subtasks": [{"description": "paste", "target_app": "slideapp", "depends_on": []}],
                    },
                    "shell_commands": [],
                    "assigned_app": {"app_id": "slideapp", "instance": 0},
                    "agent_message": "",
                    "user_prompt": None,
                    "status": "ASSIGN",
                }
            },
            "app": {},
        }
        from agentos.planner import Planner, ScriptedBackend

        config = make_config()
        session = build_session(
            config, planner=Planner(ScriptedBackend(fixture)), agent_registry=registry
        )
        round_ = session.run_round("paste via the external agent")
        assert round_.status == "finished"
        assert session.desktop.running_apps["slideapp"].doc_state["pasted"] is True
        agents = events_of(session, "agent_created")
        assert agents[0]["payload"]["agent"].startswith("shim:")
        assert session.blackboard.read(kind="insight")[0].body == {"by": "shim"}

    def test_shim_actions_still_screened(self):
        def adapter(subtask, observation, context):
            return {
                "batch": [
                    {"operation": "api_call", "target": None,
                     "payload": {"api": "delete_file", "args": {"path": "x"}}, "rationale": ""}
                ],
                "rationale": "", "status": "FINISH", "blackboard_updates": [],
            }

        registry = AgentRegistry()
        registry.register_external("fileman", adapter)
        fixture = {
            "host": {
                "shim delete": {
                    "subtask_plan": {
                        "origin_request": "shim delete",
                        "subtasks": [{"description": "d", "target_app": "fileman", "depends_on": []}],
                    },
                    "shell_commands": [], "assigned_app": {"app_id": "fileman", "instance": 0},
                    "agent_message": "", "user_prompt": None, "status": "ASSIGN",
                }
            },
            "app": {},
        }
        from agentos.planner import Planner, ScriptedBackend

        gate = QueueGate([Decision(approve=False)])
        config = make_config(risk_rules=str(fixtures.RISK_RULES), auto_approve=False)
        session = build_session(
            config, planner=Planner(ScriptedBackend(fixture)),
            agent_registry=registry, gate=gate,
        )
        session.run_round("shim delete")
        assert events_of(session, "action_aborted")
        assert "deleted_path" not in session.desktop.running_apps["fileman"].doc_state


class TestMultiRound:
    def test_second_round_sees_first_round_summary(self):
        config = make_config()
        scenario = Scenario.load(fixtures.SCENARIOS_DIR / "save_as_api.json")
        session = build_session(config, scenario=scenario)
        session.run_round(scenario.request)
        session.run_round(scenario.request)
        host_calls = [
            e for e in session.events.all_events()
            if e["kind"] == "planner_call" and e["payload"]["role"] == "host"
        ]
        assert host_calls[0]["payload"]["prior_rounds"] == []
        prior = host_calls[1]["payload"]["prior_rounds"]
        assert len(prior) == 1
        assert prior[0]["verdict"] == "success"

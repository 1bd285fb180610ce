"""HTTP control plane: endpoints, status codes, event stream, confirmations."""
import time

from fastapi.testclient import TestClient

from agentos import fixtures
from agentos.config import RunConfig
from agentos.service import create_app


def make_client(planner_fixture: str = "save_as_api.json", **overrides) -> TestClient:
    config = RunConfig(
        catalog_dir=str(fixtures.CATALOG_DIR),
        planner_fixture=str(fixtures.PLANNER_DIR / planner_fixture),
        api_manifest=str(fixtures.API_MANIFEST),
        risk_rules=str(fixtures.RISK_RULES),
        **overrides,
    )
    return TestClient(create_app(config, scenarios_dir=fixtures.SCENARIOS_DIR))


def poll_until(client, session_id, predicate, timeout=8.0):
    since = 0
    collected = []
    deadline = time.time() + timeout
    while time.time() < deadline:
        events = client.get(
            f"/sessions/{session_id}/events", params={"since": since, "wait_ms": 200}
        ).json()
        for event in events:
            since = event["seq"]
            collected.append(event)
            if predicate(event):
                return collected
    raise AssertionError(f"condition not reached; saw {[e['kind'] for e in collected]}")


class TestSessionEndpoints:
    def test_create_and_list(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        listed = client.get("/sessions").json()
        assert [s["id"] for s in listed] == [sid]
        assert client.get(f"/sessions/{sid}").json()["status"] == "open"

    def test_unknown_session_404(self):
        client = make_client()
        assert client.get("/sessions/ghost").status_code == 404
        assert client.post("/sessions/ghost/rounds", json={"request": "x"}).status_code == 404
        assert client.post("/sessions/ghost/confirm", json={"decision": "approve"}).status_code == 404
        assert client.post("/sessions/ghost/cancel").status_code == 404
        assert client.get("/sessions/ghost/log").status_code == 404

    def test_malformed_round_body_400(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        assert client.post(f"/sessions/{sid}/rounds", json={}).status_code == 400
        assert client.post(f"/sessions/{sid}/rounds", json={"request": "  "}).status_code == 400


class TestRoundFlow:
    def test_happy_path_round(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        response = client.post(f"/sessions/{sid}/rounds", json={"request": "export the sheet as csv"})
        assert response.json() == {"round_index": 1}
        events = poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        finished = events[-1]
        assert finished["payload"]["status"] == "finished"
        assert finished["payload"]["verdict"] == "success"

    def test_second_round_same_session(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "export the sheet as csv"})
        poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        response = client.post(f"/sessions/{sid}/rounds", json={"request": "export the sheet as csv"})
        assert response.json() == {"round_index": 2}
        events = poll_until(
            client, sid, lambda e: e["kind"] == "round_finished" and e["round"] == 2
        )
        assert events[-1]["payload"]["verdict"] == "success"

    def test_round_in_progress_409(self):
        client = make_client(planner_fixture="risky_delete.json")
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "delete the scratch file"})
        poll_until(client, sid, lambda e: e["kind"] == "confirmation_requested")
        response = client.post(f"/sessions/{sid}/rounds", json={"request": "another"})
        assert response.status_code == 409
        client.post(f"/sessions/{sid}/confirm", json={"decision": "deny"})
        poll_until(client, sid, lambda e: e["kind"] == "round_finished")

    def test_events_since_filters(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "export the sheet as csv"})
        poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        all_events = client.get(f"/sessions/{sid}/events").json()
        tail = client.get(f"/sessions/{sid}/events", params={"since": 5}).json()
        assert [e["seq"] for e in tail] == [e["seq"] for e in all_events if e["seq"] > 5]
        assert [e["seq"] for e in all_events] == list(range(1, len(all_events) + 1))


class TestConfirmFlow:
    def test_pending_then_approve(self):
        client = make_client(planner_fixture="risky_delete.json")
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "delete the scratch file"})
        poll_until(client, sid, lambda e: e["kind"] == "confirmation_requested")
        assert client.post(f"/sessions/{sid}/confirm", json={"decision": "approve"}).json() == {
            "status": "resumed"
        }
        events = poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        assert events[-1]["payload"]["verdict"] == "success"

    def test_pending_then_deny_shows_abort(self):
        client = make_client(planner_fixture="risky_delete.json")
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "delete the scratch file"})
        poll_until(client, sid, lambda e: e["kind"] == "confirmation_requested")
        client.post(f"/sessions/{sid}/confirm", json={"decision": "deny"})
        events = poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        kinds = [e["kind"] for e in events]
        assert "action_aborted" in kinds
        assert events[-1]["payload"]["verdict"] == "failure"

    def test_confirm_with_nothing_pending_409(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        assert client.post(f"/sessions/{sid}/confirm", json={"decision": "approve"}).status_code == 409

    def test_malformed_confirm_400(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        assert client.post(f"/sessions/{sid}/confirm", json={"decision": "maybe"}).status_code == 400

    def test_clarification_reply_resumes_host(self):
        client = make_client(planner_fixture="ambiguous.json")
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "tidy up the file"})
        poll_until(client, sid, lambda e: e["kind"] == "user_prompt")
        client.post(f"/sessions/{sid}/confirm", json={"reply": "scratch.txt"})
        events = poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        assert events[-1]["payload"]["status"] == "finished"


class TestCancel:
    def test_cancel_aborts_between_actions(self):
        client = make_client(planner_fixture="budget_runaway.json", max_steps=3000)
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "flip through the slides forever"})
        poll_until(client, sid, lambda e: e["kind"] == "executor_action")
        assert client.post(f"/sessions/{sid}/cancel").json() == {"status": "cancelling"}
        events = poll_until(client, sid, lambda e: e["kind"] == "round_finished", timeout=10)
        assert events[-1]["payload"]["status"] == "failed"
        assert "cancelled" in events[-1]["payload"]["fail_reason"]

    def test_cancel_with_nothing_running_409(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        assert client.post(f"/sessions/{sid}/cancel").status_code == 409


class TestLog:
    def test_markdown_log_served(self):
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "export the sheet as csv"})
        poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        response = client.get(f"/sessions/{sid}/log")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/markdown")
        assert "## Round 1: export the sheet as csv" in response.text

    def test_event_stream_reconstructs_trace(self):
        """Dumping the event stream equals the session's own trace dump."""
        client = make_client()
        sid = client.post("/sessions").json()["session_id"]
        client.post(f"/sessions/{sid}/rounds", json={"request": "export the sheet as csv"})
        poll_until(client, sid, lambda e: e["kind"] == "round_finished")
        manager = client.app.state.manager
        session = manager.get(sid)
        streamed = client.get(f"/sessions/{sid}/events").json()
        assert streamed == session.events.all_events()

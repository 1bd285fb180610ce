"""HTTP control plane exposing sessions, rounds, events, and confirmations.

Plain JSON over HTTP with long-poll event reads (GET /events?since=N
optionally parks up to wait_ms). The event stream is gap-free and strictly
ordered per session; dumping it reconstructs the trace file exactly.
Cancellation takes effect between actions, never mid-action.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .config import RunConfig
from .errors import AgentOSError, NotPending, RoundInProgress, SessionClosed
from .runtime import Decision, ThreadGate
from .session import Scenario, Session, build_planner, build_session
from .simenv import Catalog

MAX_WAIT_MS = 25_000


class ScenarioBook:
    """Maps round requests to scenario files so service rounds can be
    evaluated against deterministic ground truth."""

    def __init__(self, directory: str | Path | None):
        self._by_request: dict[str, Scenario] = {}
        if directory is not None:
            for path in sorted(Path(directory).glob("*.json")):
                scenario = Scenario.load(path)
                self._by_request[scenario.request] = scenario

    def resolve(self, request: str) -> Scenario | None:
        return self._by_request.get(request)

    def __len__(self) -> int:
        return len(self._by_request)


class SessionManager:
    def __init__(self, config: RunConfig, scenarios: ScenarioBook):
        self.config = config
        self.scenarios = scenarios
        self.catalog = Catalog.load(config.catalog_dir) if config.catalog_dir else None
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self) -> Session:
        gate = ThreadGate()
        planner = build_planner(self.config)
        session = build_session(
            self.config,
            catalog=self.catalog,
            gate=gate,
            planner=planner,
        )
        session.scenario_resolver = self.scenarios.resolve
        with self._lock:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            return self.sessions.get(session_id)

    def list(self) -> list[Session]:
        with self._lock:
            return list(self.sessions.values())


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


def create_app(
    config: RunConfig,
    scenarios_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="agentos service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    manager = SessionManager(config, ScenarioBook(scenarios_dir))
    app.state.manager = manager

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return _error(400, "MalformedBody", str(exc.errors()))

    @app.exception_handler(AgentOSError)
    async def runtime_error(request: Request, exc: AgentOSError):
        return _error(500, exc.code, str(exc))

    @app.post("/sessions")
    def create_session() -> dict[str, Any]:
        session = manager.create()
        return {"session_id": session.id}

    @app.get("/sessions")
    def list_sessions() -> list[dict[str, Any]]:
        return [s.to_json() for s in manager.list()]

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = manager.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        return session.to_json()

    @app.post("/sessions/{session_id}/rounds")
    def start_round(session_id: str, body: dict[str, Any]):
        session = manager.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        request_text = body.get("request")
        if not isinstance(request_text, str) or not request_text.strip():
            return _error(400, "MalformedBody", "body must carry a non-empty 'request'")
        try:
            round_ = session.start_round_async(request_text)
        except RoundInProgress as exc:
            return _error(409, exc.code, str(exc))
        except SessionClosed as exc:
            return _error(409, exc.code, str(exc))
        return {"round_index": round_.index}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, since: int = 0, wait_ms: int = 0):
        session = manager.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        wait_ms = max(0, min(wait_ms, MAX_WAIT_MS))
        return session.events.read_since(since, wait_ms=wait_ms)

    @app.post("/sessions/{session_id}/confirm")
    def confirm(session_id: str, body: dict[str, Any]):
        session = manager.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        decision_word = body.get("decision")
        reply = body.get("reply")
        if decision_word not in ("approve", "deny") and not isinstance(reply, str):
            return _error(400, "MalformedBody", "body needs decision approve|deny or a reply")
        decision = Decision(
            approve=(decision_word == "approve") or (decision_word is None and bool(reply)),
            reply=reply,
        )
        try:
            session.confirm(decision)
        except NotPending as exc:
            return _error(409, exc.code, str(exc))
        return {"status": "resumed"}

    @app.post("/sessions/{session_id}/cancel")
    def cancel(session_id: str):
        session = manager.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        if not session.rounds or session.rounds[-1].terminal:
            return _error(409, "NothingRunning", "no active round to cancel")
        session.cancel()
        return {"status": "cancelling"}

    @app.get("/sessions/{session_id}/log")
    def log(session_id: str):
        session = manager.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        return PlainTextResponse(session.export_markdown(), media_type="text/markdown")

    return app

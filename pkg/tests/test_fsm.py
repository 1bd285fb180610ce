"""FSM legality for both agents: table-only transitions, absorbing terminals."""
import random

import pytest

from agentos.appagent import APP_TRANSITIONS, AppEvent, AppFSM
from agentos.domain import AppState, HostState
from agentos.errors import IllegalTransition
from agentos.hostagent import HOST_TRANSITIONS, HostEvent, HostFSM


class TestHostTable:
    @pytest.mark.parametrize(
        "state,event,expected",
        [
            (HostState.CONTINUE, HostEvent.SUBTASK_READY, HostState.ASSIGN),
            (HostState.ASSIGN, HostEvent.SUBTASK_DONE, HostState.CONTINUE),
            (HostState.ASSIGN, HostEvent.SUBTASK_FAILED, HostState.FAIL),
            (HostState.CONTINUE, HostEvent.CLARIFICATION_NEEDED, HostState.PENDING),
            (HostState.PENDING, HostEvent.USER_REPLY, HostState.CONTINUE),
            (HostState.CONTINUE, HostEvent.ALL_DONE, HostState.FINISH),
            (HostState.PENDING, HostEvent.FATAL, HostState.FAIL),
        ],
    )
    def test_legal_edges(self, state, event, expected):
        fsm = HostFSM()
        fsm.state = state
        assert fsm.step(event) is expected

    @pytest.mark.parametrize("state", [HostState.FINISH, HostState.FAIL])
    @pytest.mark.parametrize("event", list(HostEvent))
    def test_terminals_absorbing(self, state, event):
        fsm = HostFSM()
        fsm.state = state
        with pytest.raises(IllegalTransition):
            fsm.step(event)

    def test_illegal_event_raises(self):
        fsm = HostFSM()
        with pytest.raises(IllegalTransition):
            fsm.step(HostEvent.SUBTASK_DONE)  # not in ASSIGN yet


class TestAppTable:
    def test_table_is_exactly_the_specified_edge_set(self):
        edges = {(s.value, t.value) for (s, _), t in APP_TRANSITIONS.items()}
        assert edges == {
            ("CONTINUE", "CONTINUE"),
            ("CONTINUE", "PENDING"),
            ("PENDING", "CONTINUE"),
            ("CONTINUE", "FINISH"),
            ("CONTINUE", "FAIL"),
            ("PENDING", "FAIL"),
        }

    @pytest.mark.parametrize("state", [AppState.FINISH, AppState.FAIL])
    @pytest.mark.parametrize("event", list(AppEvent))
    def test_terminals_absorbing(self, state, event):
        fsm = AppFSM()
        fsm.state = state
        with pytest.raises(IllegalTransition):
            fsm.step(event)

    def test_pending_cannot_finish_directly(self):
        fsm = AppFSM()
        fsm.step(AppEvent.RISK_FLAGGED)
        with pytest.raises(IllegalTransition):
            fsm.step(AppEvent.TASK_DONE)


def random_walk(fsm, table, rng: random.Random, max_len: int = 12) -> None:
    """Drive a random legal walk; every transition must stay in the table."""
    for _ in range(rng.randrange(1, max_len)):
        legal = [event for (state, event) in table if state is fsm.state]
        if not legal:
            illegal = rng.choice([e for (_, e) in table])
            with pytest.raises(IllegalTransition):
                fsm.step(illegal)
            return
        event = rng.choice(legal)
        before = fsm.state
        after = fsm.step(event)
        assert table[(before, event)] is after


class TestRandomWalks:
    def test_host_walks(self):
        rng = random.Random(11)
        for _ in range(500):
            random_walk(HostFSM(), HOST_TRANSITIONS, rng)

    def test_app_walks(self):
        rng = random.Random(13)
        for _ in range(500):
            random_walk(AppFSM(), APP_TRANSITIONS, rng)

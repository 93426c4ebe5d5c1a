from __future__ import annotations

import random
from dataclasses import replace
from datetime import timedelta

import pytest

from prophecy_hall.domain import SessionState, VeilState
from prophecy_hall.errors import InvalidTransition
from prophecy_hall.fsm import (
    EventType,
    GENERATING_STATES,
    SessionEvent,
    TERMINAL_STATES,
    TRANSITIONS,
    apply_event,
    create_session,
    reachable,
    veil_state,
)

from .conftest import make_prophecy, make_question


def event_for(event_type: EventType, blob_store=None) -> SessionEvent:
    """A payload-complete event of the given type."""
    if event_type is EventType.TRANSCRIPTION_DONE:
        return SessionEvent.transcription_done(make_question())
    if event_type is EventType.TEXT_DONE:
        return SessionEvent.text_done(make_prophecy())
    if event_type is EventType.VIDEO_DONE:
        from .conftest import make_artifact

        return SessionEvent.video_done(make_artifact(blob_store))
    if event_type is EventType.STAGE_FAILED:
        return SessionEvent.stage_failed("videogen", "timeout")
    return SessionEvent(event_type)


@pytest.fixture
def all_events(blob_store):
    return {event_type: event_for(event_type, blob_store) for event_type in EventType}


def session_in(state: SessionState):
    return replace(create_session(), state=state)


class TestCreateSession:
    def test_initial_state(self):
        session = create_session()
        assert session.state is SessionState.AWAITING_QUESTION
        assert session.question is None
        assert session.prophecy is None
        assert session.video is None
        assert session.history == ()

    def test_distinct_ids(self):
        assert create_session().id != create_session().id


class TestTransitionTable:
    def test_happy_path_rows(self, all_events):
        session = create_session()
        expected = [
            (EventType.QUESTION_SUBMITTED, SessionState.TRANSCRIBING),
            (EventType.TRANSCRIPTION_DONE, SessionState.GENERATING_TEXT),
            (EventType.TEXT_DONE, SessionState.GENERATING_VIDEO),
            (EventType.VIDEO_DONE, SessionState.READY),
            (EventType.VIEW_STARTED, SessionState.VIEWING),
            (EventType.VIEW_FINISHED, SessionState.COMPLETED),
        ]
        for event_type, target in expected:
            session = apply_event(session, all_events[event_type])
            assert session.state is target

    def test_second_question_rejected_while_viewing(self, all_events):
        session = session_in(SessionState.VIEWING)
        with pytest.raises(InvalidTransition):
            apply_event(session, all_events[EventType.QUESTION_SUBMITTED])

    def test_stage_failure_from_video(self):
        session = session_in(SessionState.GENERATING_VIDEO)
        failed = apply_event(
            session, SessionEvent.stage_failed("videogen", "timeout")
        )
        assert failed.state is SessionState.FAILED
        assert failed.failure == ("videogen", "timeout")

    def test_exhaustive_8x7_classification(self, all_events):
        accepted = 0
        for state in SessionState:
            for event_type in EventType:
                session = session_in(state)
                event = all_events[event_type]
                if (state, event_type) in TRANSITIONS:
                    result = apply_event(session, event)
                    assert result.state is TRANSITIONS[(state, event_type)]
                    accepted += 1
                else:
                    with pytest.raises(InvalidTransition) as exc_info:
                        apply_event(session, event)
                    assert exc_info.value.state == state.value
                    assert exc_info.value.event == event_type.value
        assert accepted == len(TRANSITIONS) == 9
        assert len(SessionState) * len(EventType) == 56

    def test_terminal_states_absorb_nothing(self, all_events):
        for state in TERMINAL_STATES:
            for event in all_events.values():
                with pytest.raises(InvalidTransition):
                    apply_event(session_in(state), event)

    def test_rejected_event_leaves_session_unchanged(self, all_events):
        session = create_session()
        before = session
        with pytest.raises(InvalidTransition):
            apply_event(session, all_events[EventType.VIEW_STARTED])
        assert session == before


class TestHistory:
    def test_accepted_events_append(self, all_events):
        session = create_session()
        session = apply_event(session, all_events[EventType.QUESTION_SUBMITTED])
        session = apply_event(session, all_events[EventType.TRANSCRIPTION_DONE])
        assert len(session.history) == 2
        assert [event.type for event, _ts in session.history] == [
            EventType.QUESTION_SUBMITTED,
            EventType.TRANSCRIPTION_DONE,
        ]

    def test_strictly_increasing_timestamps(self, all_events):
        # Same wall-clock instant for every event; history must still be
        # strictly ordered.
        now = create_session().created_at
        session = create_session(now)
        for event_type in (
            EventType.QUESTION_SUBMITTED,
            EventType.TRANSCRIPTION_DONE,
            EventType.TEXT_DONE,
            EventType.VIDEO_DONE,
        ):
            session = apply_event(session, all_events[event_type], now)
        stamps = [ts for _event, ts in session.history]
        assert all(a < b for a, b in zip(stamps, stamps[1:]))
        assert session.updated_at == stamps[-1]

    def test_clock_regression_nudged(self, all_events):
        session = create_session()
        session = apply_event(session, all_events[EventType.QUESTION_SUBMITTED])
        earlier = session.updated_at - timedelta(seconds=5)
        session = apply_event(
            session, all_events[EventType.TRANSCRIPTION_DONE], earlier
        )
        stamps = [ts for _event, ts in session.history]
        assert stamps[0] < stamps[1]

    def test_payloads_land_on_session(self, all_events):
        session = session_in(SessionState.TRANSCRIBING)
        session = apply_event(session, all_events[EventType.TRANSCRIPTION_DONE])
        assert session.question is not None
        session = apply_event(session, all_events[EventType.TEXT_DONE])
        assert session.prophecy is not None
        session = apply_event(session, all_events[EventType.VIDEO_DONE])
        assert session.video is not None
        assert session.state is SessionState.READY


class TestEventValidation:
    def test_done_events_require_payloads(self):
        with pytest.raises(ValueError):
            SessionEvent(EventType.TRANSCRIPTION_DONE)
        with pytest.raises(ValueError):
            SessionEvent(EventType.TEXT_DONE)
        with pytest.raises(ValueError):
            SessionEvent(EventType.VIDEO_DONE)

    def test_stage_failed_requires_stage_and_reason(self):
        with pytest.raises(ValueError):
            SessionEvent(EventType.STAGE_FAILED)
        with pytest.raises(ValueError):
            SessionEvent(EventType.STAGE_FAILED, stage="videogen")

    def test_plain_events_refuse_payloads(self):
        with pytest.raises(ValueError):
            SessionEvent(EventType.QUESTION_SUBMITTED, question=make_question())
        with pytest.raises(ValueError):
            SessionEvent(EventType.VIEW_STARTED, stage="x", reason="y")


class TestVeil:
    def test_total_over_all_states(self):
        for state in SessionState:
            assert isinstance(veil_state(state), VeilState)

    def test_concealed_exactly_while_generating(self):
        for state in SessionState:
            concealed = veil_state(state) is VeilState.CONCEALED
            assert concealed == (state in GENERATING_STATES)

    def test_spec_points(self):
        assert veil_state(SessionState.TRANSCRIBING) is VeilState.CONCEALED
        assert veil_state(SessionState.READY) is VeilState.PROPHECY_READY
        assert veil_state(SessionState.AWAITING_QUESTION) is VeilState.MEDIUM_VISIBLE
        assert veil_state(SessionState.COMPLETED) is VeilState.MEDIUM_VISIBLE
        assert veil_state(SessionState.FAILED) is VeilState.MEDIUM_VISIBLE


class TestReachable:
    def test_terminals_reach_nothing(self):
        assert reachable(SessionState.COMPLETED) == set()
        assert reachable(SessionState.FAILED) == set()

    def test_start_reaches_all_others(self):
        expected = set(SessionState) - {SessionState.AWAITING_QUESTION}
        assert reachable(SessionState.AWAITING_QUESTION) == expected

    def test_ready_reaches_viewing_and_completed(self):
        assert reachable(SessionState.READY) == {
            SessionState.VIEWING,
            SessionState.COMPLETED,
        }


class TestFuzz:
    def test_random_sequences_stay_inside_declared_states(self, all_events):
        # Mirrors the event-sequence fuzz in the acceptance gate, smaller.
        rng = random.Random(2026)
        events = list(all_events.values())
        for _trial in range(500):
            session = create_session()
            questions_accepted = 0
            for _step in range(12):
                event = rng.choice(events)
                try:
                    session = apply_event(session, event)
                except InvalidTransition:
                    continue
                if event.type is EventType.QUESTION_SUBMITTED:
                    questions_accepted += 1
                assert session.state in set(SessionState)
            assert questions_accepted <= 1
            assert len(session.history) <= 12

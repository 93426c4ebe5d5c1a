"""Visitor-journey state machine.

One session is one visitor's single question: submitted, transcribed,
answered as text, rendered as video, revealed, watched, done. The
transition table below is closed; anything not listed is rejected with
InvalidTransition, which is also what enforces the one-question rule.

    awaiting_question --question_submitted--> transcribing
    transcribing      --transcription_done--> generating_text
    generating_text   --text_done----------> generating_video
    generating_video  --video_done---------> ready
    ready             --view_started-------> viewing
    viewing           --view_finished------> completed
    {transcribing, generating_text, generating_video}
                      --stage_failed-------> failed

``apply_event`` is a pure function: session in, new session out. Callers
that share sessions across threads must serialize events per session id.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum

from .domain import (
    ProphecyText,
    SessionId,
    SessionState,
    TranslatedQuestion,
    VeilState,
    VideoArtifact,
    utc_now,
)
from .errors import InvalidTransition


class EventType(str, Enum):
    QUESTION_SUBMITTED = "question_submitted"
    TRANSCRIPTION_DONE = "transcription_done"
    TEXT_DONE = "text_done"
    VIDEO_DONE = "video_done"
    STAGE_FAILED = "stage_failed"
    VIEW_STARTED = "view_started"
    VIEW_FINISHED = "view_finished"


@dataclass(frozen=True)
class SessionEvent:
    """A lifecycle event, carrying the stage output it announces (if any)."""

    type: EventType
    question: TranslatedQuestion | None = None
    prophecy: ProphecyText | None = None
    video: VideoArtifact | None = None
    stage: str | None = None
    reason: str | None = None

    def __post_init__(self):
        if self.type is EventType.STAGE_FAILED:
            if not self.stage or not self.reason:
                raise ValueError("stage_failed events must carry stage and reason")
        elif self.stage is not None or self.reason is not None:
            raise ValueError(f"{self.type.value} events must not carry stage/reason")
        payloads = {
            EventType.TRANSCRIPTION_DONE: self.question,
            EventType.TEXT_DONE: self.prophecy,
            EventType.VIDEO_DONE: self.video,
        }
        for event_type, payload in payloads.items():
            if self.type is event_type and payload is None:
                raise ValueError(f"{event_type.value} events must carry their payload")
            if self.type is not event_type and payload is not None:
                raise ValueError(f"{self.type.value} events must not carry {event_type.value} payload")

    @classmethod
    def question_submitted(cls) -> SessionEvent:
        return cls(EventType.QUESTION_SUBMITTED)

    @classmethod
    def transcription_done(cls, question: TranslatedQuestion) -> SessionEvent:
        return cls(EventType.TRANSCRIPTION_DONE, question=question)

    @classmethod
    def text_done(cls, prophecy: ProphecyText) -> SessionEvent:
        return cls(EventType.TEXT_DONE, prophecy=prophecy)

    @classmethod
    def video_done(cls, video: VideoArtifact) -> SessionEvent:
        return cls(EventType.VIDEO_DONE, video=video)

    @classmethod
    def stage_failed(cls, stage: str, reason: str) -> SessionEvent:
        return cls(EventType.STAGE_FAILED, stage=stage, reason=reason)

    @classmethod
    def view_started(cls) -> SessionEvent:
        return cls(EventType.VIEW_STARTED)

    @classmethod
    def view_finished(cls) -> SessionEvent:
        return cls(EventType.VIEW_FINISHED)


TRANSITIONS: dict[tuple[SessionState, EventType], SessionState] = {
    (SessionState.AWAITING_QUESTION, EventType.QUESTION_SUBMITTED): SessionState.TRANSCRIBING,
    (SessionState.TRANSCRIBING, EventType.TRANSCRIPTION_DONE): SessionState.GENERATING_TEXT,
    (SessionState.GENERATING_TEXT, EventType.TEXT_DONE): SessionState.GENERATING_VIDEO,
    (SessionState.GENERATING_VIDEO, EventType.VIDEO_DONE): SessionState.READY,
    (SessionState.READY, EventType.VIEW_STARTED): SessionState.VIEWING,
    (SessionState.VIEWING, EventType.VIEW_FINISHED): SessionState.COMPLETED,
    (SessionState.TRANSCRIBING, EventType.STAGE_FAILED): SessionState.FAILED,
    (SessionState.GENERATING_TEXT, EventType.STAGE_FAILED): SessionState.FAILED,
    (SessionState.GENERATING_VIDEO, EventType.STAGE_FAILED): SessionState.FAILED,
}

GENERATING_STATES = frozenset(
    {SessionState.TRANSCRIBING, SessionState.GENERATING_TEXT, SessionState.GENERATING_VIDEO}
)
TERMINAL_STATES = frozenset({SessionState.COMPLETED, SessionState.FAILED})

_VEIL: dict[SessionState, VeilState] = {
    SessionState.AWAITING_QUESTION: VeilState.MEDIUM_VISIBLE,
    SessionState.TRANSCRIBING: VeilState.CONCEALED,
    SessionState.GENERATING_TEXT: VeilState.CONCEALED,
    SessionState.GENERATING_VIDEO: VeilState.CONCEALED,
    SessionState.READY: VeilState.PROPHECY_READY,
    SessionState.VIEWING: VeilState.PROPHECY_READY,
    SessionState.COMPLETED: VeilState.MEDIUM_VISIBLE,
    SessionState.FAILED: VeilState.MEDIUM_VISIBLE,
}


@dataclass(frozen=True)
class Session:
    """One visitor's journey, including the full accepted-event history."""

    id: SessionId
    state: SessionState
    created_at: datetime
    updated_at: datetime
    question: TranslatedQuestion | None = None
    prophecy: ProphecyText | None = None
    video: VideoArtifact | None = None
    history: tuple[tuple[SessionEvent, datetime], ...] = ()

    @property
    def failure(self) -> tuple[str, str] | None:
        """(stage, reason) of the failing stage, if this session failed."""
        for event, _ts in reversed(self.history):
            if event.type is EventType.STAGE_FAILED:
                return (event.stage or "", event.reason or "")
        return None


def create_session(now: datetime | None = None) -> Session:
    now = now or utc_now()
    return Session(
        id=SessionId.new(),
        state=SessionState.AWAITING_QUESTION,
        created_at=now,
        updated_at=now,
    )


def apply_event(session: Session, event: SessionEvent, now: datetime | None = None) -> Session:
    """Apply one event, returning the new session or raising InvalidTransition.

    The rejected session object is untouched. History stays strictly
    time-ordered: a ``now`` at or before the last accepted event is nudged
    forward by one millisecond.
    """
    next_state = TRANSITIONS.get((session.state, event.type))
    if next_state is None:
        raise InvalidTransition(session.state.value, event.type.value)

    now = now or utc_now()
    if session.history:
        last_ts = session.history[-1][1]
        if now <= last_ts:
            now = last_ts + timedelta(milliseconds=1)

    updates: dict = {
        "state": next_state,
        "updated_at": now,
        "history": session.history + ((event, now),),
    }
    if event.question is not None:
        updates["question"] = event.question
    if event.prophecy is not None:
        updates["prophecy"] = event.prophecy
    if event.video is not None:
        updates["video"] = event.video
    return replace(session, **updates)


def veil_state(state: SessionState) -> VeilState:
    """Presentation state of the veil, a total function of the session state."""
    return _VEIL[state]


def reachable(state: SessionState) -> set[SessionState]:
    """All states reachable from ``state`` via one or more transitions."""
    seen: set[SessionState] = set()
    frontier = [state]
    while frontier:
        current = frontier.pop()
        for (from_state, _event), to_state in TRANSITIONS.items():
            if from_state is current and to_state not in seen:
                seen.add(to_state)
                frontier.append(to_state)
    return seen

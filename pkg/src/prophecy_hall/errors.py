"""Shared error taxonomy.

Every error that can cross a module or wire boundary carries a stable
machine-readable ``code`` plus optional structured ``details``; the HTTP
layer renders these as ``{code, message, details?}`` bodies.
"""

from __future__ import annotations

from typing import Any, ClassVar


class HallError(Exception):
    """Base class for all service errors."""

    code: ClassVar[str] = "error"

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        body: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.details:
            body["details"] = self.details
        return body


# --- audio validation ---

class EmptyPayload(HallError):
    code = "empty_payload"


class AudioTooShort(HallError):
    code = "audio_too_short"


class AudioTooLong(HallError):
    code = "audio_too_long"


class UnsupportedFormat(HallError):
    code = "unsupported_format"


# --- questions and prompts ---

class QuestionTooLong(HallError):
    code = "question_too_long"


class EmptyPrompt(HallError):
    code = "empty_prompt"


class TemplateFormatError(HallError):
    code = "template_format"


# --- session lifecycle ---

class InvalidTransition(HallError):
    code = "invalid_transition"

    def __init__(self, state: str, event: str):
        super().__init__(
            f"event {event!r} is not allowed in state {state!r}",
            state=state, event=event,
        )
        self.state = state
        self.event = event


class SessionNotFound(HallError):
    code = "session_not_found"


class NotReady(HallError):
    code = "not_ready"


class CapacityExceeded(HallError):
    code = "capacity_exceeded"


# --- stage backends ---

class NoSpeechDetected(HallError):
    code = "no_speech_detected"


class BackendUnavailable(HallError):
    code = "backend_unavailable"


class BackendRejected(HallError):
    code = "backend_rejected"


class StageTimeout(HallError):
    code = "stage_timeout"


class StageError(HallError):
    code = "stage_error"


# --- archive and blob storage ---

class StorageFull(HallError):
    code = "storage_full"


class DuplicateId(HallError):
    code = "duplicate_id"


class DanglingVideoRef(HallError):
    code = "dangling_video_ref"


class BadCursor(HallError):
    code = "bad_cursor"


class BadParameters(HallError):
    code = "bad_parameters"


class NotFound(HallError):
    code = "not_found"

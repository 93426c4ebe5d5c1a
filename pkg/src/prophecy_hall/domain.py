"""Core domain types shared by every other module.

All types here are immutable value objects, safe to share across threads.
Wire form is canonical JSON with snake_case field names and RFC 3339
timestamps at millisecond precision.
"""

from __future__ import annotations

import io
import re
import uuid
import wave
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any

from .errors import (
    AudioTooLong,
    AudioTooShort,
    EmptyPayload,
    QuestionTooLong,
    UnsupportedFormat,
)

SUPPORTED_SAMPLE_RATES = (16000, 44100, 48000)
MIN_QUESTION_DURATION_S = 0.2
MAX_QUESTION_DURATION_S = 60.0
MAX_QUESTION_CHARS = 1000
MAX_PROPHECY_CHARS = 2000

_BLOB_REF_RE = re.compile(r"^[0-9a-f]{64}$")


# --- timestamps ---

def utc_now() -> datetime:
    """Current UTC time truncated to whole milliseconds.

    Millisecond truncation keeps in-memory timestamps identical to their
    serialized RFC 3339 form, so round-trips are exact.
    """
    now = datetime.now(tz=timezone.utc)
    return now.replace(microsecond=now.microsecond // 1000 * 1000)


def format_timestamp(dt: datetime) -> str:
    """Render a UTC timestamp as RFC 3339 with milliseconds, e.g. 2026-01-05T09:30:00.250Z."""
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(value: str) -> datetime:
    try:
        parsed = datetime.strptime(value, "%Y-%m-%dT%H:%M:%S.%fZ")
    except ValueError as exc:
        raise ValueError(f"bad RFC 3339 timestamp {value!r}: {exc}") from None
    return parsed.replace(tzinfo=timezone.utc)


def validate_blob_ref(ref: str) -> str:
    if not isinstance(ref, str) or not _BLOB_REF_RE.fullmatch(ref):
        raise ValueError(f"blob ref must be 64 lowercase hex chars, got {ref!r}")
    return ref


# --- identifiers ---

@dataclass(frozen=True)
class SessionId:
    """128-bit unique session identifier, canonical lowercase hex-with-dashes."""

    value: uuid.UUID

    @classmethod
    def new(cls) -> SessionId:
        return cls(uuid.uuid4())

    @classmethod
    def parse(cls, text: str) -> SessionId:
        try:
            parsed = uuid.UUID(text)
        except (ValueError, AttributeError, TypeError) as exc:
            raise ValueError(f"bad session id {text!r}") from exc
        if str(parsed) != text:
            raise ValueError(f"session id {text!r} is not in canonical form")
        return cls(parsed)

    def __str__(self) -> str:
        return str(self.value)


# --- audio ---

class AudioEncoding(str, Enum):
    PCM16LE = "pcm16le"


@dataclass(frozen=True)
class AudioClip:
    """One validated spoken question: mono little-endian 16-bit PCM."""

    samples: bytes
    sample_rate_hz: int
    channels: int
    duration_s: float
    encoding: AudioEncoding = AudioEncoding.PCM16LE


def validate_audio(raw_bytes: bytes, declared_rate: int, declared_channels: int) -> AudioClip:
    """Validate a PCM16LE payload and return an AudioClip, or raise a typed error.

    Either every AudioClip invariant holds on the returned clip or an error
    is raised; no partially valid clip is ever produced.
    """
    if not raw_bytes:
        raise EmptyPayload("audio payload is empty")
    if declared_rate not in SUPPORTED_SAMPLE_RATES:
        raise UnsupportedFormat(
            f"sample rate {declared_rate} not supported",
            supported=list(SUPPORTED_SAMPLE_RATES),
        )
    if declared_channels != 1:
        raise UnsupportedFormat(f"expected mono audio, got {declared_channels} channels")
    if len(raw_bytes) % 2 != 0:
        raise UnsupportedFormat("PCM16 payload has an odd byte length")

    duration_s = len(raw_bytes) / (declared_rate * 2)
    if duration_s < MIN_QUESTION_DURATION_S:
        raise AudioTooShort(
            f"clip is {duration_s:.3f} s, minimum is {MIN_QUESTION_DURATION_S} s",
            duration_s=duration_s,
        )
    if duration_s > MAX_QUESTION_DURATION_S:
        raise AudioTooLong(
            f"clip is {duration_s:.3f} s, maximum is {MAX_QUESTION_DURATION_S} s",
            duration_s=duration_s,
        )
    return AudioClip(
        samples=raw_bytes,
        sample_rate_hz=declared_rate,
        channels=1,
        duration_s=duration_s,
    )


def parse_wav(data: bytes) -> AudioClip:
    """Parse a RIFF/WAV byte string and validate its PCM payload."""
    try:
        with wave.open(io.BytesIO(data), "rb") as reader:
            if reader.getsampwidth() != 2:
                raise UnsupportedFormat(
                    f"expected 16-bit samples, got {reader.getsampwidth() * 8}-bit"
                )
            channels = reader.getnchannels()
            rate = reader.getframerate()
            payload = reader.readframes(reader.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormat(f"not a readable PCM WAV file: {exc}") from None
    except EOFError:
        raise UnsupportedFormat("truncated WAV file") from None
    return validate_audio(payload, rate, channels)


def encode_wav(samples: bytes, sample_rate_hz: int) -> bytes:
    """Wrap a mono PCM16LE payload in a minimal RIFF/WAV container."""
    buf = io.BytesIO()
    with wave.open(buf, "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(sample_rate_hz)
        writer.writeframes(samples)
    return buf.getvalue()


# --- question text ---

def sanitize_spoken_text(text: str) -> str:
    """Normalize transcript text for prompting.

    Newlines and tabs collapse to single spaces, remaining control
    characters are stripped, runs of spaces collapse, and the ends are
    trimmed.
    """
    text = re.sub(r"[\r\n\t\v\f]+", " ", text)
    text = "".join(ch for ch in text if ord(ch) >= 32 and ord(ch) != 127)
    return re.sub(r" {2,}", " ", text).strip()


@dataclass(frozen=True)
class TranslatedQuestion:
    """Transcribed question in its source language plus its English form."""

    source_lang: str
    source_text: str
    english_text: str

    def __post_init__(self):
        if not self.english_text:
            raise ValueError("english_text must be nonempty")
        if len(sanitize_spoken_text(self.english_text)) > MAX_QUESTION_CHARS:
            raise QuestionTooLong(
                f"question exceeds {MAX_QUESTION_CHARS} characters after sanitization"
            )
        if self.source_lang == "en" and self.english_text != self.source_text:
            raise ValueError("English questions must pass through unchanged")


# --- prompt template ---

@dataclass(frozen=True)
class PromptTemplate:
    """System preamble plus ordered few-shot (question, prophecy) pairs."""

    preamble: str
    few_shot: tuple[tuple[str, str], ...]
    version: int = 1


# --- prophecy text and video ---

@dataclass(frozen=True)
class ProphecyText:
    text: str
    prompt_used: str
    backend_id: str
    seed: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("prophecy text must be nonempty")
        if len(self.text) > MAX_PROPHECY_CHARS:
            raise ValueError(f"prophecy text exceeds {MAX_PROPHECY_CHARS} characters")


@dataclass(frozen=True)
class VideoJob:
    prophecy: ProphecyText
    target_duration_s: float = 30.0
    fps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.target_duration_s <= 0:
            raise ValueError("target_duration_s must be positive")
        if self.fps < 1:
            raise ValueError("fps must be at least 1")

    @property
    def frame_count(self) -> int:
        return round(self.target_duration_s * self.fps)


@dataclass(frozen=True)
class VideoArtifact:
    """A rendered prophecy, stored as a content-addressed frame archive."""

    blob_ref: str
    duration_s: float
    fps: int
    frame_count: int
    width: int
    height: int

    def __post_init__(self):
        validate_blob_ref(self.blob_ref)
        if self.frame_count != round(self.duration_s * self.fps):
            raise ValueError(
                f"frame_count {self.frame_count} does not match "
                f"round({self.duration_s} * {self.fps})"
            )


# --- session presentation states ---

class SessionState(str, Enum):
    AWAITING_QUESTION = "awaiting_question"
    TRANSCRIBING = "transcribing"
    GENERATING_TEXT = "generating_text"
    GENERATING_VIDEO = "generating_video"
    READY = "ready"
    VIEWING = "viewing"
    COMPLETED = "completed"
    FAILED = "failed"


class VeilState(str, Enum):
    MEDIUM_VISIBLE = "medium_visible"
    CONCEALED = "concealed"
    PROPHECY_READY = "prophecy_ready"


# --- archive entries ---

@dataclass(frozen=True)
class ArchiveEntry:
    """Immutable record of one completed prophecy."""

    id: SessionId
    prophecy_text: str
    video_ref: str
    created_at: datetime = field(default_factory=utc_now)

    def __post_init__(self):
        validate_blob_ref(self.video_ref)
        if not self.prophecy_text:
            raise ValueError("prophecy_text must be nonempty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": str(self.id),
            "prophecy_text": self.prophecy_text,
            "video_ref": self.video_ref,
            "created_at": format_timestamp(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArchiveEntry:
        return cls(
            id=SessionId.parse(data["id"]),
            prophecy_text=data["prophecy_text"],
            video_ref=data["video_ref"],
            created_at=parse_timestamp(data["created_at"]),
        )

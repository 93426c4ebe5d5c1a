"""Stage backend contracts and descriptors.

Each pipeline stage is served by a pluggable backend: a deterministic
in-process mock, or an adapter that POSTs to a remote model server.
Backends are stateless and safe to call concurrently; they never retry
internally and never touch session state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol, runtime_checkable

from ..domain import AudioClip, ProphecyText, TranslatedQuestion, VideoArtifact, VideoJob


class BackendKind(str, Enum):
    MOCK = "mock"
    REMOTE_HTTP = "remote_http"


@dataclass(frozen=True)
class BackendDescriptor:
    """Configuration handle naming one backend instance."""

    backend_id: str
    kind: BackendKind
    endpoint: str | None = None
    auth_token_env: str | None = None

    def __post_init__(self):
        if self.kind is BackendKind.REMOTE_HTTP and not self.endpoint:
            raise ValueError(f"remote backend {self.backend_id!r} needs an endpoint")
        if self.kind is BackendKind.MOCK and self.endpoint:
            raise ValueError(f"mock backend {self.backend_id!r} must not set an endpoint")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> BackendDescriptor:
        return cls(
            backend_id=data["backend_id"],
            kind=BackendKind(data.get("kind", "mock")),
            endpoint=data.get("endpoint"),
            auth_token_env=data.get("auth_token_env"),
        )


@runtime_checkable
class Transcriber(Protocol):
    backend_id: str

    def transcribe_translate(self, clip: AudioClip, seed: int) -> TranslatedQuestion: ...


@runtime_checkable
class TextGenerator(Protocol):
    backend_id: str

    def generate_prophecy(self, prompt: str, seed: int) -> ProphecyText: ...


@runtime_checkable
class VideoRenderer(Protocol):
    backend_id: str

    def render_video(self, job: VideoJob) -> VideoArtifact: ...

"""Stage backends: deterministic mocks plus remote HTTP adapters."""

from __future__ import annotations

from ..archive import BlobStore
from .base import BackendDescriptor, BackendKind, TextGenerator, Transcriber, VideoRenderer
from .fixtures import (
    FIXTURE_MAGIC,
    FixtureRecord,
    build_fixture_payload,
    build_fixture_wav,
    load_fixture_table,
    parse_fixture_payload,
)
from .mock import MockTextGenerator, MockTranscriber, MockVideoRenderer
from .remote import RemoteTextGenerator, RemoteTranscriber, RemoteVideoRenderer


def make_transcriber(descriptor: BackendDescriptor, timeout_s: float) -> Transcriber:
    if descriptor.kind is BackendKind.MOCK:
        return MockTranscriber(backend_id=descriptor.backend_id)
    return RemoteTranscriber(descriptor, timeout_s)


def make_text_generator(descriptor: BackendDescriptor, timeout_s: float) -> TextGenerator:
    if descriptor.kind is BackendKind.MOCK:
        return MockTextGenerator(backend_id=descriptor.backend_id)
    return RemoteTextGenerator(descriptor, timeout_s)


def make_video_renderer(
    descriptor: BackendDescriptor,
    timeout_s: float,
    blobs: BlobStore,
    width: int = 256,
    height: int = 256,
    simulated_rate: float = 0.0,
) -> VideoRenderer:
    if descriptor.kind is BackendKind.MOCK:
        return MockVideoRenderer(
            blobs,
            width=width,
            height=height,
            simulated_rate=simulated_rate,
            backend_id=descriptor.backend_id,
        )
    return RemoteVideoRenderer(descriptor, timeout_s, blobs)


__all__ = [
    "BackendDescriptor",
    "BackendKind",
    "Transcriber",
    "TextGenerator",
    "VideoRenderer",
    "FIXTURE_MAGIC",
    "FixtureRecord",
    "build_fixture_payload",
    "build_fixture_wav",
    "load_fixture_table",
    "parse_fixture_payload",
    "MockTranscriber",
    "MockTextGenerator",
    "MockVideoRenderer",
    "RemoteTranscriber",
    "RemoteTextGenerator",
    "RemoteVideoRenderer",
    "make_transcriber",
    "make_text_generator",
    "make_video_renderer",
]

from __future__ import annotations

import hashlib

import pytest

from prophecy_hall.archive import BlobStore, ProphecyArchive
from prophecy_hall.config import ServiceConfig, VideoDefaults
from prophecy_hall.domain import ProphecyText, TranslatedQuestion, VideoArtifact
from prophecy_hall.frames import VideoManifest, build_frame_archive, encode_ppm

# Small enough to keep full pipeline runs well under a second.
SMALL_VIDEO = VideoDefaults(duration_s=1.0, fps=5, width=64, height=64)


@pytest.fixture
def blob_store(tmp_path):
    return BlobStore(tmp_path / "blobs")


@pytest.fixture
def prophecy_archive(tmp_path, blob_store):
    archive = ProphecyArchive(tmp_path, blob_store)
    yield archive
    archive.close()


@pytest.fixture
def small_config(tmp_path):
    return ServiceConfig(data_dir=tmp_path / "data", video=SMALL_VIDEO)


def make_question(text: str = "Will I be happy?", lang: str = "en") -> TranslatedQuestion:
    source = text if lang == "en" else f"[{lang}] {text}"
    return TranslatedQuestion(source_lang=lang, source_text=source, english_text=text)


def make_prophecy(text: str = "A door opens.", seed: int = 0) -> ProphecyText:
    return ProphecyText(text=text, prompt_used="Q: x\nA:", backend_id="test", seed=seed)


def tiny_frame_archive(tag: str) -> bytes:
    """A minimal valid one-frame archive, distinct per tag."""
    shade = hashlib.sha256(tag.encode()).digest()[0]
    frame = encode_ppm(2, 2, bytes([shade] * 12))
    manifest = VideoManifest(
        duration_s=0.1,
        fps=10,
        frame_count=1,
        width=2,
        height=2,
        prophecy_digest=hashlib.sha256(tag.encode()).hexdigest(),
    )
    return build_frame_archive(manifest, [frame])


def make_artifact(blob_store: BlobStore, tag: str = "clip") -> VideoArtifact:
    data = tiny_frame_archive(tag)
    ref = blob_store.put(data)
    return VideoArtifact(
        blob_ref=ref, duration_s=0.1, fps=10, frame_count=1, width=2, height=2
    )

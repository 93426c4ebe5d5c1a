"""Deterministic in-process stage backends.

Every mock is a pure function of its inputs and seed (modulo the optional
simulated latency on the renderer), so tests and demos are byte-for-byte
reproducible. No model weights, no network.
"""

from __future__ import annotations

import hashlib
import time

import numpy as np

from ..domain import (
    AudioClip,
    ProphecyText,
    TranslatedQuestion,
    VideoArtifact,
    VideoJob,
)
from ..errors import EmptyPrompt, NoSpeechDetected
from ..frames import VideoManifest, build_frame_archive, encode_ppm
from ..archive import BlobStore
from .fixtures import load_fixture_table, parse_fixture_payload

_U64 = (1 << 64) - 1


class _DigestStream:
    """Unbounded stream of small deterministic integers from a SHA-256 chain."""

    def __init__(self, *parts: bytes):
        self._block = hashlib.sha256(b"\x1e".join(parts)).digest()
        self._pos = 0

    def below(self, bound: int) -> int:
        if self._pos + 4 > len(self._block):
            self._block = hashlib.sha256(self._block).digest()
            self._pos = 0
        value = int.from_bytes(self._block[self._pos:self._pos + 4], "little")
        self._pos += 4
        return value % bound

    def pick(self, options):
        return options[self.below(len(options))]


def _seed_bytes(seed: int) -> bytes:
    return (seed & _U64).to_bytes(8, "little")


# --- transcription ---

_PSEUDO_OPENERS = ["Will", "When will", "Why does", "How long until", "Can"]
_PSEUDO_SUBJECTS = [
    "the long road", "an old promise", "the hidden door", "my restless heart",
    "the next season", "a distant friend", "the work of my hands", "the quiet house",
]
_PSEUDO_VERBS = [
    "find", "remember", "forgive", "carry", "answer", "outlast", "welcome",
]
_PSEUDO_OBJECTS = [
    "my name", "what I lost", "the years ahead", "its own weight",
    "what I planted", "the ones I love", "a second chance",
]


class MockTranscriber:
    """Replays fixture transcripts; invents a stable question for anything else."""

    def __init__(self, backend_id: str = "mock-transcribe"):
        self.backend_id = backend_id
        self._table = load_fixture_table()

    def transcribe_translate(self, clip: AudioClip, seed: int) -> TranslatedQuestion:
        if not any(clip.samples):
            raise NoSpeechDetected("clip is pure silence")

        record = parse_fixture_payload(clip.samples)
        if record is not None and record.inline:
            assert record.lang is not None and record.text is not None
            source = record.text
            return TranslatedQuestion(
                source_lang=record.lang,
                source_text=source,
                english_text=source,
            )
        if record is not None and record.key in self._table:
            return self._table[record.key]

        # Unknown key or free-form audio: deterministic pseudo-question.
        stream = _DigestStream(hashlib.sha256(clip.samples).digest(), _seed_bytes(seed))
        question = (
            f"{stream.pick(_PSEUDO_OPENERS)} {stream.pick(_PSEUDO_SUBJECTS)} "
            f"{stream.pick(_PSEUDO_VERBS)} {stream.pick(_PSEUDO_OBJECTS)}?"
        )
        return TranslatedQuestion(source_lang="en", source_text=question, english_text=question)


# --- prophecy text ---

_NOUNS = [
    "a slow river", "the brightest star", "an unopened letter", "the turning tide",
    "a patient flame", "the first frost", "an unlocked gate", "the long summer",
    "a borrowed map", "the deepest root", "a faithful shadow", "the last bell",
    "an early harvest", "the silver thread", "a sheltered harbor", "the oldest tree",
]

_OPENINGS = [
    "The stars lean close and speak of {noun}.",
    "Beneath a veiled moon, {noun} gathers strength.",
    "Your question stirs the water, and {noun} rises to meet it.",
    "The wind that follows you carries the scent of {noun}.",
    "Time folds back on itself and shows you {noun}.",
    "At the edge of sleep you have already glimpsed {noun}.",
    "The door you keep passing opens onto {noun}.",
    "What you buried in spring returns as {noun}.",
]

_MIDDLES = [
    "Do not mistake its silence for refusal.",
    "It asks only that you arrive unhurried.",
    "Three times it will seem lost, and three times it will return.",
    "Those who walk beside you see it more clearly than you do.",
    "Feed it honestly and it will not betray you.",
    "Its shape changes, but its direction does not.",
    "You have carried the key for longer than you know.",
    "Let the cold season do its quiet work.",
]

_CLOSINGS = [
    "When {noun} stands before you, you will know what to keep.",
    "Trust the hour that smells of rain; it belongs to you.",
    "What is written for you cannot be spent by another.",
    "Walk toward it slowly, and it will walk toward you.",
    "The answer ripens on its own branch; do not shake the tree.",
    "Carry this lightly, for prophecy is a lantern, not a leash.",
]


def _final_question(prompt: str) -> str:
    # The prompt ends with "Q: <question>\nA:"; fall back to the raw prompt
    # so any nonempty input still yields a prophecy.
    marker = prompt.rfind("Q: ")
    if marker >= 0:
        tail = prompt[marker + 3:]
        end = tail.find("\nA:")
        if end >= 0:
            return tail[:end]
    return prompt[-200:]


class MockTextGenerator:
    """Composes a 2-4 sentence prophecy from a fixed phrase table."""

    def __init__(self, backend_id: str = "mock-textgen"):
        self.backend_id = backend_id

    def generate_prophecy(self, prompt: str, seed: int) -> ProphecyText:
        if not prompt:
            raise EmptyPrompt("prompt must be nonempty")
        question = _final_question(prompt)
        stream = _DigestStream(question.encode("utf-8"), _seed_bytes(seed))

        sentences = [stream.pick(_OPENINGS).format(noun=stream.pick(_NOUNS))]
        for _ in range(stream.below(3)):  # 0..2 middle sentences
            sentences.append(stream.pick(_MIDDLES))
        sentences.append(stream.pick(_CLOSINGS).format(noun=stream.pick(_NOUNS)))

        return ProphecyText(
            text=" ".join(sentences),
            prompt_used=prompt,
            backend_id=self.backend_id,
            seed=seed,
        )


# --- video rendering ---

_LATTICE = 8


def _bilinear_wrap(lattice: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a wrapping value-noise lattice at fractional coordinates."""
    n = lattice.shape[0]
    ix = np.floor(xs).astype(int) % n
    iy = np.floor(ys).astype(int) % n
    fx = xs - np.floor(xs)
    fy = ys - np.floor(ys)
    # Smoothstep the interpolation weights for a softer field.
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    x0, x1 = ix, (ix + 1) % n
    y0, y1 = iy, (iy + 1) % n
    top = lattice[y0[:, None], x0[None, :]] * (1 - fx)[None, :] + \
        lattice[y0[:, None], x1[None, :]] * fx[None, :]
    bottom = lattice[y1[:, None], x0[None, :]] * (1 - fx)[None, :] + \
        lattice[y1[:, None], x1[None, :]] * fx[None, :]
    return top * (1 - fy)[:, None] + bottom * fy[:, None]


def render_noise_frames(
    prophecy_text: str, seed: int, frame_count: int, width: int, height: int
) -> list[bytes]:
    """Procedural frames: a drifting value-noise field under a derived palette."""
    digest = hashlib.sha256(prophecy_text.encode("utf-8") + _seed_bytes(seed)).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    lattice = rng.random((_LATTICE, _LATTICE))
    palette = np.array(
        [[digest[8 + 3 * i + c] for c in range(3)] for i in range(3)], dtype=np.float64
    )
    drift_x = 0.05 + digest[17] / 255.0 * 0.25
    drift_y = 0.05 + digest[18] / 255.0 * 0.25

    base_x = np.arange(width, dtype=np.float64) / width * _LATTICE
    base_y = np.arange(height, dtype=np.float64) / height * _LATTICE

    frames = []
    for index in range(frame_count):
        field = _bilinear_wrap(lattice, base_x + index * drift_x, base_y + index * drift_y)
        t = np.clip(field, 0.0, 1.0)[..., None]
        low = palette[0] + (palette[1] - palette[0]) * (2.0 * t)
        high = palette[1] + (palette[2] - palette[1]) * (2.0 * t - 1.0)
        rgb = np.where(t < 0.5, low, high)
        pixels = np.clip(np.round(rgb), 0, 255).astype(np.uint8)
        frames.append(encode_ppm(width, height, pixels.tobytes()))
    return frames


class MockVideoRenderer:
    """Renders prophecy videos as seeded noise fields into the blob store.

    ``simulated_rate`` is wall seconds slept per second of output video;
    leave it at 0 in tests, set 4.0 to demo realistic generation latency.
    """

    def __init__(
        self,
        blobs: BlobStore,
        width: int = 256,
        height: int = 256,
        simulated_rate: float = 0.0,
        backend_id: str = "mock-render",
    ):
        self.backend_id = backend_id
        self.blobs = blobs
        self.width = width
        self.height = height
        self.simulated_rate = simulated_rate

    def render_video(self, job: VideoJob) -> VideoArtifact:
        frames = render_noise_frames(
            job.prophecy.text, job.seed, job.frame_count, self.width, self.height
        )
        manifest = VideoManifest(
            duration_s=job.target_duration_s,
            fps=job.fps,
            frame_count=job.frame_count,
            width=self.width,
            height=self.height,
            prophecy_digest=hashlib.sha256(job.prophecy.text.encode("utf-8")).hexdigest(),
        )
        archive = build_frame_archive(manifest, frames)
        if self.simulated_rate > 0:
            time.sleep(self.simulated_rate * job.target_duration_s)
        ref = self.blobs.put(archive)
        return VideoArtifact(
            blob_ref=ref,
            duration_s=job.target_duration_s,
            fps=job.fps,
            frame_count=job.frame_count,
            width=self.width,
            height=self.height,
        )

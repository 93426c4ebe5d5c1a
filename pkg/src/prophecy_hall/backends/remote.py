"""HTTP adapters for real model servers.

One POST per stage call, JSON in and JSON out. Adapters never retry;
the orchestrator owns retry policy, so every call surfaces exactly one
outcome: a value, BackendUnavailable, or BackendRejected.
"""

from __future__ import annotations

import base64
import os

import requests

from ..domain import (
    AudioClip,
    ProphecyText,
    TranslatedQuestion,
    VideoArtifact,
    VideoJob,
    encode_wav,
)
from ..errors import BackendRejected, BackendUnavailable
from ..frames import archive_digest, parse_frame_archive
from ..archive import BlobStore
from .base import BackendDescriptor, BackendKind


class _RemoteStage:
    def __init__(self, descriptor: BackendDescriptor, timeout_s: float):
        if descriptor.kind is not BackendKind.REMOTE_HTTP:
            raise ValueError(f"descriptor {descriptor.backend_id!r} is not remote_http")
        self.backend_id = descriptor.backend_id
        self._endpoint = descriptor.endpoint.rstrip("/") if descriptor.endpoint else ""
        self._timeout_s = timeout_s
        self._headers = {"Content-Type": "application/json"}
        if descriptor.auth_token_env:
            token = os.environ.get(descriptor.auth_token_env)
            if token:
                self._headers["Authorization"] = f"Bearer {token}"

    def _post(self, path: str, payload: dict) -> dict:
        url = self._endpoint + path
        try:
            response = requests.post(
                url, json=payload, headers=self._headers, timeout=self._timeout_s
            )
        except requests.Timeout as exc:
            raise BackendUnavailable(f"{self.backend_id}: timeout calling {url}") from exc
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.backend_id}: cannot reach {url}: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise BackendRejected(
                f"{self.backend_id}: {url} returned {response.status_code}",
                status=response.status_code, body=response.text[:2000],
            )
        try:
            body = response.json()
        except ValueError as exc:
            raise BackendRejected(f"{self.backend_id}: {url} returned non-JSON body") from exc
        if not isinstance(body, dict):
            raise BackendRejected(f"{self.backend_id}: {url} returned non-object JSON")
        return body

    def _fetch(self, url: str) -> bytes:
        try:
            response = requests.get(url, timeout=self._timeout_s)
        except requests.Timeout as exc:
            raise BackendUnavailable(f"{self.backend_id}: timeout fetching {url}") from exc
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.backend_id}: cannot fetch {url}: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise BackendRejected(
                f"{self.backend_id}: artifact fetch returned {response.status_code}"
            )
        return response.content


def _require_str(body: dict, field: str, backend_id: str) -> str:
    value = body.get(field)
    if not isinstance(value, str) or not value:
        raise BackendRejected(f"{backend_id}: response missing field {field!r}")
    return value


class RemoteTranscriber(_RemoteStage):
    """POST /v1/transcribe with the question audio as a base64 WAV."""

    def transcribe_translate(self, clip: AudioClip, seed: int) -> TranslatedQuestion:
        wav = encode_wav(clip.samples, clip.sample_rate_hz)
        body = self._post(
            "/v1/transcribe",
            {"audio_wav_base64": base64.b64encode(wav).decode("ascii"), "seed": seed},
        )
        source_lang = _require_str(body, "source_lang", self.backend_id)
        source_text = _require_str(body, "source_text", self.backend_id)
        english_text = _require_str(body, "english_text", self.backend_id)
        try:
            return TranslatedQuestion(
                source_lang=source_lang, source_text=source_text, english_text=english_text
            )
        except Exception as exc:
            raise BackendRejected(f"{self.backend_id}: invalid transcript: {exc}") from exc


class RemoteTextGenerator(_RemoteStage):
    """POST /v1/complete with the assembled few-shot prompt."""

    def generate_prophecy(self, prompt: str, seed: int) -> ProphecyText:
        body = self._post("/v1/complete", {"prompt": prompt, "seed": seed})
        text = _require_str(body, "text", self.backend_id)
        try:
            return ProphecyText(
                text=text, prompt_used=prompt, backend_id=self.backend_id, seed=seed
            )
        except Exception as exc:
            raise BackendRejected(f"{self.backend_id}: invalid prophecy: {exc}") from exc


class RemoteVideoRenderer(_RemoteStage):
    """POST /v1/render; accepts inline base64 or a pull URL for the archive."""

    def __init__(self, descriptor: BackendDescriptor, timeout_s: float, blobs: BlobStore):
        super().__init__(descriptor, timeout_s)
        self.blobs = blobs

    def render_video(self, job: VideoJob) -> VideoArtifact:
        body = self._post(
            "/v1/render",
            {
                "prophecy": job.prophecy.text,
                "duration_s": job.target_duration_s,
                "fps": job.fps,
                "seed": job.seed,
            },
        )
        if "blob_base64" in body:
            raw = body["blob_base64"]
            if not isinstance(raw, str):
                raise BackendRejected(f"{self.backend_id}: blob_base64 must be a string")
            try:
                archive = base64.b64decode(raw, validate=True)
            except Exception as exc:
                raise BackendRejected(f"{self.backend_id}: blob_base64 not valid base64") from exc
        elif "url" in body:
            archive = self._fetch(_require_str(body, "url", self.backend_id))
        else:
            raise BackendRejected(
                f"{self.backend_id}: render response has neither blob_base64 nor url"
            )

        try:
            manifest, _frames = parse_frame_archive(archive)
        except Exception as exc:
            raise BackendRejected(f"{self.backend_id}: unparseable frame archive: {exc}") from exc
        if manifest.frame_count != job.frame_count:
            raise BackendRejected(
                f"{self.backend_id}: archive has {manifest.frame_count} frames, "
                f"expected {job.frame_count}",
            )
        ref = self.blobs.put(archive)
        assert ref == archive_digest(archive)
        return VideoArtifact(
            blob_ref=ref,
            duration_s=manifest.duration_s,
            fps=manifest.fps,
            frame_count=manifest.frame_count,
            width=manifest.width,
            height=manifest.height,
        )

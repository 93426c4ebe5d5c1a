"""Codec-free video container: a stored ZIP of raw P6 PPM frames.

Layout is bit-exact so archives are content-addressable: ``manifest.json``
first (canonical JSON, sorted keys, no whitespace), then
``frame_000000.ppm`` onward, all ZIP_STORED with zeroed timestamps. The
archive digest is SHA-256 over the ZIP bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import asdict, dataclass
from typing import Any

MANIFEST_NAME = "manifest.json"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class VideoManifest:
    duration_s: float
    fps: int
    frame_count: int
    width: int
    height: int
    prophecy_digest: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, raw: str | bytes) -> VideoManifest:
        data: dict[str, Any] = json.loads(raw)
        return cls(**data)


def frame_name(index: int) -> str:
    return f"frame_{index:06d}.ppm"


def encode_ppm(width: int, height: int, rgb: bytes) -> bytes:
    """Encode raw interleaved RGB bytes as a binary P6 PPM."""
    if len(rgb) != width * height * 3:
        raise ValueError(f"expected {width * height * 3} RGB bytes, got {len(rgb)}")
    return b"P6\n%d %d\n255\n" % (width, height) + rgb


def decode_ppm(data: bytes) -> tuple[int, int, bytes]:
    """Decode a binary P6 PPM into (width, height, rgb bytes)."""
    if not data.startswith(b"P6"):
        raise ValueError("not a P6 PPM")
    # Header is three whitespace-separated tokens after the magic: w, h, maxval.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"unsupported PPM maxval {maxval}")
    rgb = data[pos:]
    if len(rgb) != width * height * 3:
        raise ValueError("PPM pixel data has wrong length")
    return width, height, rgb


def build_frame_archive(manifest: VideoManifest, frames: list[bytes]) -> bytes:
    """Assemble the deterministic ZIP for a rendered frame sequence."""
    if len(frames) != manifest.frame_count:
        raise ValueError(f"manifest says {manifest.frame_count} frames, got {len(frames)}")
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as archive:
        _write(archive, MANIFEST_NAME, manifest.to_json().encode("utf-8"))
        for index, frame in enumerate(frames):
            _write(archive, frame_name(index), frame)
    return buf.getvalue()


def _write(archive: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.create_system = 3
    info.external_attr = 0o644 << 16
    archive.writestr(info, data)


def parse_frame_archive(data: bytes) -> tuple[VideoManifest, list[bytes]]:
    """Read back a frame archive, returning the manifest and frames in order."""
    with zipfile.ZipFile(io.BytesIO(data)) as archive:
        manifest = VideoManifest.from_json(archive.read(MANIFEST_NAME))
        frames = [archive.read(frame_name(i)) for i in range(manifest.frame_count)]
    return manifest, frames


def archive_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()

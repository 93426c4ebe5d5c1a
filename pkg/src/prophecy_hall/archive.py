"""Append-only prophecy persistence and the display sampler.

On disk, rooted at one data directory:

    blobs/<first2>/<digest>.zip   content-addressed frame archives
    archive/index.jsonl           append-only entry log, one JSON object per line
    archive/snapshot.json         periodic compaction of the log

Durability contract: a blob is always written (atomic rename) before its
index line, and every index append is fsynced. Recovery after a crash
therefore sees each entry either fully present or fully absent: a torn
trailing index line is dropped, entries duplicated across snapshot and
log are deduplicated, and an index row whose blob is missing is discarded
rather than surfaced.

Writes are serialized behind one lock; readers work off an immutable
in-memory tuple and never block the writer.
"""

from __future__ import annotations

import base64
import binascii
import errno
import hashlib
import json
import logging
import os
import random
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from .domain import ArchiveEntry, SessionId, format_timestamp, parse_timestamp, validate_blob_ref
from .errors import BadCursor, DanglingVideoRef, DuplicateId, NotFound, StorageFull

logger = logging.getLogger(__name__)

MAX_PAGE_LIMIT = 100


class BlobStore:
    """Content-addressed blob files: ``blobs/<first2>/<sha256>.zip``."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.zip"

    def put(self, data: bytes) -> str:
        """Store bytes, returning their digest. Atomic: temp file + rename."""
        digest = hashlib.sha256(data).hexdigest()
        path = self._path(digest)
        if path.exists():
            return digest
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.parent / f".{digest}.{os.getpid()}.tmp"
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            if exc.errno == errno.ENOSPC:
                raise StorageFull("blob store device is full") from exc
            raise
        return digest

    def get(self, ref: str) -> bytes:
        try:
            validate_blob_ref(ref)
        except ValueError:
            raise NotFound(f"malformed blob ref {ref!r}") from None
        path = self._path(ref)
        if not path.exists():
            raise NotFound(f"no blob {ref}")
        return path.read_bytes()

    def has(self, ref: str) -> bool:
        return self._path(ref).exists()


@dataclass(frozen=True)
class ArchivePage:
    entries: tuple[ArchiveEntry, ...]
    next_cursor: str | None = None


def _encode_cursor(entry: ArchiveEntry) -> str:
    raw = json.dumps(
        {"ts": format_timestamp(entry.created_at), "id": str(entry.id)},
        separators=(",", ":"),
    )
    return base64.urlsafe_b64encode(raw.encode("utf-8")).decode("ascii")


def _decode_cursor(cursor: str) -> tuple[str, str]:
    try:
        raw = base64.urlsafe_b64decode(cursor.encode("ascii"))
        data = json.loads(raw)
        ts, entry_id = data["ts"], data["id"]
        parse_timestamp(ts)
        SessionId.parse(entry_id)
    except (binascii.Error, ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise BadCursor(f"undecodable cursor: {exc}") from None
    return ts, entry_id


class ProphecyArchive:
    """Append-only store of completed prophecies, with pagination and sampling."""

    def __init__(
        self,
        data_dir: Path | str,
        blobs: BlobStore,
        snapshot_every: int = 256,
        max_entries: int | None = None,
    ):
        self.blobs = blobs
        self._dir = Path(data_dir) / "archive"
        self._dir.mkdir(parents=True, exist_ok=True)
        self._index_path = self._dir / "index.jsonl"
        self._snapshot_path = self._dir / "snapshot.json"
        self._snapshot_every = snapshot_every
        self._max_entries = max_entries
        self._write_lock = threading.Lock()
        self._entries: tuple[ArchiveEntry, ...] = ()
        self._by_id: dict[str, ArchiveEntry] = {}
        self._appends_since_snapshot = 0
        self._recover()
        self._fh = open(self._index_path, "a", encoding="utf-8")

    # -- recovery --

    def _recover(self) -> None:
        loaded: list[ArchiveEntry] = []
        if self._snapshot_path.exists():
            for item in json.loads(self._snapshot_path.read_text("utf-8")):
                loaded.append(ArchiveEntry.from_dict(item))
        if self._index_path.exists():
            lines = self._index_path.read_text("utf-8").splitlines()
            for lineno, line in enumerate(lines):
                if not line.strip():
                    continue
                try:
                    loaded.append(ArchiveEntry.from_dict(json.loads(line)))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    if lineno == len(lines) - 1:
                        logger.warning("dropping torn trailing index line: %s", exc)
                        break
                    raise ValueError(f"corrupt archive index at line {lineno + 1}: {exc}") from exc

        seen: dict[str, ArchiveEntry] = {}
        for entry in loaded:
            key = str(entry.id)
            if key in seen:
                continue  # snapshot/log overlap after a crash mid-compaction
            if not self.blobs.has(entry.video_ref):
                logger.warning("dropping archive row %s: blob %s missing", key, entry.video_ref)
                continue
            seen[key] = entry
        self._by_id = seen
        self._entries = tuple(seen.values())

    # -- writes --

    def append(self, entry: ArchiveEntry) -> str:
        """Durably persist one completed prophecy; returns the entry id."""
        with self._write_lock:
            key = str(entry.id)
            if key in self._by_id:
                raise DuplicateId(f"archive already holds entry {key}")
            if not self.blobs.has(entry.video_ref):
                raise DanglingVideoRef(f"video {entry.video_ref} is not in blob storage")
            if self._max_entries is not None and len(self._entries) >= self._max_entries:
                raise StorageFull(f"archive is capped at {self._max_entries} entries")
            if self._entries and entry.created_at < self._entries[-1].created_at:
                # Wall clock stepped backwards; keep insertion order non-decreasing.
                entry = replace(entry, created_at=self._entries[-1].created_at)

            line = json.dumps(entry.to_dict(), separators=(",", ":")) + "\n"
            try:
                self._fh.write(line)
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                if exc.errno == errno.ENOSPC:
                    raise StorageFull("archive index device is full") from exc
                raise

            self._by_id = {**self._by_id, key: entry}
            self._entries = self._entries + (entry,)
            self._appends_since_snapshot += 1
            if self._appends_since_snapshot >= self._snapshot_every:
                self._compact_locked()
            return key

    def compact(self) -> None:
        """Fold the log into snapshot.json and truncate the log."""
        with self._write_lock:
            self._compact_locked()

    def _compact_locked(self) -> None:
        tmp = self._snapshot_path.with_suffix(".json.tmp")
        payload = json.dumps([entry.to_dict() for entry in self._entries], separators=(",", ":"))
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._snapshot_path)
        self._fh.close()
        self._fh = open(self._index_path, "w", encoding="utf-8")
        self._appends_since_snapshot = 0

    def close(self) -> None:
        self._fh.close()

    # -- reads --

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> tuple[ArchiveEntry, ...]:
        """All entries in insertion order."""
        return self._entries

    def get(self, entry_id: str) -> ArchiveEntry:
        entry = self._by_id.get(entry_id)
        if entry is None:
            raise NotFound(f"no archive entry {entry_id}")
        return entry

    def list(self, cursor: str | None = None, limit: int = 20) -> ArchivePage:
        """One page of entries, newest first.

        Pagination is stable under concurrent appends: an entry appended
        between page fetches may be missed (it sorts before the cursor)
        but is never duplicated.
        """
        if not 1 <= limit <= MAX_PAGE_LIMIT:
            raise ValueError(f"limit must be in 1..{MAX_PAGE_LIMIT}, got {limit}")
        ordered = sorted(
            self._entries,
            key=lambda e: (format_timestamp(e.created_at), str(e.id)),
            reverse=True,
        )
        if cursor is not None:
            after = _decode_cursor(cursor)
            ordered = [
                e for e in ordered
                if (format_timestamp(e.created_at), str(e.id)) < after
            ]
        page = ordered[:limit]
        next_cursor = _encode_cursor(page[-1]) if len(ordered) > limit else None
        return ArchivePage(entries=tuple(page), next_cursor=next_cursor)

    def sample_for_display(self, n: int, seed: int) -> list[ArchiveEntry]:
        """Uniform sample without replacement, deterministic in (contents, n, seed)."""
        if n < 1:
            raise ValueError(f"sample size must be at least 1, got {n}")
        population = list(self._entries)
        k = min(n, len(population))
        if k == 0:
            return []
        return random.Random(seed).sample(population, k)

    def fetch_video(self, video_ref: str) -> bytes:
        """Exact stored bytes for a blob ref; SHA-256 of the result equals the ref."""
        return self.blobs.get(video_ref)

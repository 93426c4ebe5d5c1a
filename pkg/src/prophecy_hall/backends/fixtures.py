"""Fixture-audio convention for exercising the real WAV path without speech models.

A fixture clip is a valid PCM16LE payload whose first bytes spell out
what the mock transcriber should "hear":

    b"HALLFX1:" <utf-8 body> b"\\x00" <zero padding to the clip length>

The body is either a bare fixture key, looked up in the shipped
transcript table, or an inline record ``key \\x1f lang \\x1f text`` whose
embedded text is used verbatim as the transcript.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from ..domain import TranslatedQuestion, encode_wav

FIXTURE_MAGIC = b"HALLFX1:"
_FIELD_SEP = "\x1f"
_TABLE_RESOURCE = "data/fixtures.json"


@dataclass(frozen=True)
class FixtureRecord:
    key: str
    lang: str | None = None
    text: str | None = None

    @property
    def inline(self) -> bool:
        return self.text is not None


def build_fixture_payload(
    key: str,
    text: str | None = None,
    lang: str = "en",
    duration_s: float = 1.0,
    sample_rate_hz: int = 16000,
) -> bytes:
    """PCM payload of the given duration with the fixture header up front."""
    if not key:
        raise ValueError("fixture key must be nonempty")
    if _FIELD_SEP in key or "\x00" in key:
        raise ValueError("fixture key contains reserved separator bytes")
    body = key if text is None else _FIELD_SEP.join((key, lang, text))
    header = FIXTURE_MAGIC + body.encode("utf-8") + b"\x00"
    if len(header) % 2:
        header += b"\x00"
    total = round(duration_s * sample_rate_hz) * 2
    if len(header) > total:
        raise ValueError(
            f"fixture body needs {len(header)} bytes but a {duration_s} s clip holds {total}"
        )
    return header + b"\x00" * (total - len(header))


def build_fixture_wav(
    key: str,
    text: str | None = None,
    lang: str = "en",
    duration_s: float = 1.0,
    sample_rate_hz: int = 16000,
) -> bytes:
    return encode_wav(
        build_fixture_payload(key, text, lang, duration_s, sample_rate_hz),
        sample_rate_hz,
    )


def parse_fixture_payload(samples: bytes) -> FixtureRecord | None:
    """Decode the fixture header, or None if the payload does not carry one."""
    if not samples.startswith(FIXTURE_MAGIC):
        return None
    body = samples[len(FIXTURE_MAGIC):]
    terminator = body.find(b"\x00")
    if terminator >= 0:
        body = body[:terminator]
    try:
        decoded = body.decode("utf-8")
    except UnicodeDecodeError:
        return None
    parts = decoded.split(_FIELD_SEP)
    if len(parts) == 1 and parts[0]:
        return FixtureRecord(key=parts[0])
    if len(parts) == 3 and all(parts):
        return FixtureRecord(key=parts[0], lang=parts[1], text=parts[2])
    return None


def load_fixture_table() -> dict[str, TranslatedQuestion]:
    """The shipped table of known fixture keys and their transcripts."""
    raw = resources.files("prophecy_hall").joinpath(_TABLE_RESOURCE).read_text("utf-8")
    table = {}
    for key, row in json.loads(raw).items():
        table[key] = TranslatedQuestion(
            source_lang=row["source_lang"],
            source_text=row["source_text"],
            english_text=row["english_text"],
        )
    return table

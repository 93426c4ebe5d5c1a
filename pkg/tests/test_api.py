from __future__ import annotations

import hashlib
import io
import random
import threading
import time
import wave

import pytest
from fastapi.testclient import TestClient

from prophecy_hall.backends.fixtures import build_fixture_wav
from prophecy_hall.config import ServiceConfig, VideoDefaults
from prophecy_hall.domain import SessionId, SessionState, encode_wav
from prophecy_hall.fsm import reachable
from prophecy_hall.server import create_app, create_state

from .conftest import SMALL_VIDEO

GENERATING = ("transcribing", "generating_text", "generating_video")


@pytest.fixture
def make_api(tmp_path):
    clients = []

    def _make(**overrides):
        overrides.setdefault("video", SMALL_VIDEO)
        config = ServiceConfig(
            data_dir=tmp_path / f"data{len(clients)}", **overrides
        )
        state = create_state(config)
        client = TestClient(create_app(state))
        client.__enter__()
        clients.append(client)
        return client, state

    yield _make
    for client in clients:
        client.__exit__(None, None, None)


@pytest.fixture
def api(make_api):
    return make_api()


def new_session(client) -> str:
    response = client.post("/v1/sessions")
    assert response.status_code == 201
    return response.json()["session_id"]


def submit_question(client, session_id: str, key: str = "en-identity", seed: int = 1):
    return client.post(
        f"/v1/sessions/{session_id}/question",
        params={"seed": seed},
        content=build_fixture_wav(key),
        headers={"Content-Type": "audio/wav"},
    )


def wait_for_state(client, session_id: str, targets, deadline_s: float = 30.0) -> dict:
    deadline = time.monotonic() + deadline_s
    while time.monotonic() < deadline:
        body = client.get(f"/v1/sessions/{session_id}").json()
        if body["state"] in targets:
            return body
        time.sleep(0.01)
    raise AssertionError(f"session never reached {targets}")


def complete_session(client, key: str = "en-identity", seed: int = 1) -> tuple[str, dict]:
    session_id = new_session(client)
    assert submit_question(client, session_id, key, seed).status_code == 202
    wait_for_state(client, session_id, ("ready",))
    assert client.post(f"/v1/sessions/{session_id}/view").status_code == 200
    viewed = client.post(f"/v1/sessions/{session_id}/viewed")
    assert viewed.status_code == 200
    return session_id, viewed.json()


class GatedTranscriber:
    """Blocks transcription until released, so tests can observe early states."""

    def __init__(self, inner):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.entered = threading.Event()
        self.gate = threading.Event()

    def transcribe_translate(self, clip, seed):
        self.entered.set()
        assert self.gate.wait(30)
        return self.inner.transcribe_translate(clip, seed)


class GatedRenderer:
    def __init__(self, inner):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.entered = threading.Event()
        self.gate = threading.Event()

    def render_video(self, job):
        self.entered.set()
        assert self.gate.wait(60)
        return self.inner.render_video(job)


class TestSessionCreation:
    def test_create_returns_parseable_id_and_location(self, api):
        client, _state = api
        response = client.post("/v1/sessions")
        assert response.status_code == 201
        session_id = response.json()["session_id"]
        SessionId.parse(session_id)
        assert response.headers["Location"] == f"/v1/sessions/{session_id}"

    def test_two_creates_get_distinct_ids(self, api):
        client, _state = api
        assert new_session(client) != new_session(client)

    def test_capacity_limit(self, make_api):
        client, state = make_api(capacity=2)
        new_session(client)
        keep = new_session(client)
        response = client.post("/v1/sessions")
        assert response.status_code == 503
        assert response.json()["code"] == "capacity_exceeded"
        assert response.headers["Retry-After"] == "1"

        # A slot frees up once a session is gone.
        state.store.remove(SessionId.parse(keep))
        assert client.post("/v1/sessions").status_code == 201


class TestQuestionSubmission:
    def test_accepted_question_reports_transcribing_concealed(self, api):
        client, state = api
        gate = GatedTranscriber(state.orchestrator.transcriber)
        state.orchestrator.transcriber = gate
        session_id = new_session(client)

        response = submit_question(client, session_id)
        # The 202 must arrive while generation is still running.
        assert response.status_code == 202
        assert not gate.gate.is_set()
        body = response.json()
        assert body["state"] == "transcribing"
        assert body["veil"] == "concealed"
        assert body["eta_s"] >= 1.0
        assert 0.0 <= body["progress"] < 1.0
        assert "Retry-After" in response.headers

        gate.gate.set()
        wait_for_state(client, session_id, ("ready",))

    def test_second_question_conflicts(self, api):
        client, _state = api
        session_id = new_session(client)
        assert submit_question(client, session_id).status_code == 202
        response = submit_question(client, session_id)
        assert response.status_code == 409
        assert response.json()["code"] == "invalid_transition"

    def test_too_short_clip(self, api):
        client, _state = api
        session_id = new_session(client)
        clip = encode_wav(b"\x01" * 3200, 16000)  # 0.1 s
        response = client.post(
            f"/v1/sessions/{session_id}/question",
            content=clip,
            headers={"Content-Type": "audio/wav"},
        )
        assert response.status_code == 422
        assert response.json()["code"] == "audio_too_short"

    def test_stereo_clip_unsupported(self, api):
        client, _state = api
        buf = io.BytesIO()
        with wave.open(buf, "wb") as writer:
            writer.setnchannels(2)
            writer.setsampwidth(2)
            writer.setframerate(16000)
            writer.writeframes(b"\x01\x00\x02\x00" * 16000)
        response = client.post(
            f"/v1/sessions/{new_session(client)}/question",
            content=buf.getvalue(),
            headers={"Content-Type": "audio/wav"},
        )
        assert response.status_code == 422
        assert response.json()["code"] == "unsupported_format"

    def test_non_wav_body(self, api):
        client, _state = api
        response = client.post(
            f"/v1/sessions/{new_session(client)}/question",
            content=b"definitely not audio",
            headers={"Content-Type": "audio/wav"},
        )
        assert response.status_code == 422

    def test_unknown_session(self, api):
        client, _state = api
        ghost = str(SessionId.new())
        response = submit_question(client, ghost)
        assert response.status_code == 404
        assert response.json()["code"] == "session_not_found"

    def test_malformed_session_id(self, api):
        client, _state = api
        response = client.post(
            "/v1/sessions/not-a-session-id/question",
            content=build_fixture_wav("en-identity"),
            headers={"Content-Type": "audio/wav"},
        )
        assert response.status_code == 404

    def test_non_integer_seed(self, api):
        client, _state = api
        response = client.post(
            f"/v1/sessions/{new_session(client)}/question",
            params={"seed": "lucky"},
            content=build_fixture_wav("en-identity"),
            headers={"Content-Type": "audio/wav"},
        )
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "bad_parameters"
        assert body["details"]["errors"]


class TestStatus:
    def test_ready_snapshot(self, api):
        client, _state = api
        session_id = new_session(client)
        submit_question(client, session_id)
        body = wait_for_state(client, session_id, ("ready",))
        assert body["veil"] == "prophecy_ready"
        assert body["eta_s"] == 0.0
        assert body["progress"] == 1.0
        assert "error" not in body

    def test_video_stage_eta_reflects_thirty_second_job(self, make_api):
        client, state = make_api(
            video=VideoDefaults(duration_s=30.0, fps=1, width=16, height=12)
        )
        gate = GatedRenderer(state.orchestrator.video_renderer)
        state.orchestrator.video_renderer = gate
        session_id = new_session(client)
        submit_question(client, session_id)
        assert gate.entered.wait(30)

        body = client.get(f"/v1/sessions/{session_id}").json()
        assert body["state"] == "generating_video"
        # A 30 s video takes two minutes to make, minus moments already spent.
        assert body["eta_s"] == pytest.approx(120.0, abs=3.0)

        gate.gate.set()
        wait_for_state(client, session_id, ("ready",))

    def test_retry_after_only_while_pending(self, api):
        client, state = api
        gate = GatedTranscriber(state.orchestrator.transcriber)
        state.orchestrator.transcriber = gate
        session_id = new_session(client)

        fresh = client.get(f"/v1/sessions/{session_id}")
        assert "Retry-After" in fresh.headers

        submit_question(client, session_id)
        pending = client.get(f"/v1/sessions/{session_id}")
        assert "Retry-After" in pending.headers

        gate.gate.set()
        wait_for_state(client, session_id, ("ready",))
        done = client.get(f"/v1/sessions/{session_id}")
        assert "Retry-After" not in done.headers

    def test_failed_session_carries_error(self, api):
        client, _state = api
        session_id = new_session(client)
        silence = encode_wav(b"\x00" * 32000, 16000)
        client.post(
            f"/v1/sessions/{session_id}/question",
            content=silence,
            headers={"Content-Type": "audio/wav"},
        )
        body = wait_for_state(client, session_id, ("failed",))
        assert body["veil"] == "medium_visible"
        assert body["eta_s"] == 0.0
        assert body["error"]["stage"] == "transcribe"
        assert "no_speech_detected" in body["error"]["reason"]

    def test_unknown_session(self, api):
        client, _state = api
        assert client.get(f"/v1/sessions/{SessionId.new()}").status_code == 404

    def test_thousand_polls_are_idempotent(self, api):
        client, _state = api
        session_id = new_session(client)
        submit_question(client, session_id)
        wait_for_state(client, session_id, ("ready",))
        bodies = {
            client.get(f"/v1/sessions/{session_id}").text for _ in range(1000)
        }
        assert len(bodies) == 1


class TestViewAndProphecy:
    def test_view_flow(self, api):
        client, _state = api
        session_id = new_session(client)
        submit_question(client, session_id)
        wait_for_state(client, session_id, ("ready",))

        viewed = client.post(f"/v1/sessions/{session_id}/view")
        assert viewed.status_code == 200
        assert viewed.json()["state"] == "viewing"
        assert client.get(f"/v1/sessions/{session_id}").json()["state"] == "viewing"

    def test_view_before_ready_conflicts(self, api):
        client, state = api
        gate = GatedTranscriber(state.orchestrator.transcriber)
        state.orchestrator.transcriber = gate
        session_id = new_session(client)
        submit_question(client, session_id)
        response = client.post(f"/v1/sessions/{session_id}/view")
        assert response.status_code == 409
        gate.gate.set()

    def test_prophecy_bytes_match_digest(self, api):
        client, _state = api
        session_id = new_session(client)
        submit_question(client, session_id)
        wait_for_state(client, session_id, ("ready",))

        response = client.get(f"/v1/sessions/{session_id}/prophecy")
        assert response.status_code == 200
        assert response.headers["content-type"] == "application/zip"
        digest = response.headers["X-Blob-Digest"]
        assert hashlib.sha256(response.content).hexdigest() == digest
        # Fetching the prophecy is a read; the session must not move.
        assert client.get(f"/v1/sessions/{session_id}").json()["state"] == "ready"

    def test_prophecy_before_ready_conflicts(self, api):
        client, state = api
        gate = GatedTranscriber(state.orchestrator.transcriber)
        state.orchestrator.transcriber = gate
        session_id = new_session(client)
        submit_question(client, session_id)
        response = client.get(f"/v1/sessions/{session_id}/prophecy")
        assert response.status_code == 409
        assert response.json()["code"] == "not_ready"
        gate.gate.set()

    def test_prophecy_still_available_after_completion(self, api):
        client, _state = api
        session_id, _viewed = complete_session(client)
        assert client.get(f"/v1/sessions/{session_id}/prophecy").status_code == 200

    def test_streaming_variant(self, api):
        client, _state = api
        session_id = new_session(client)
        submit_question(client, session_id)
        wait_for_state(client, session_id, ("ready",))

        response = client.get(f"/v1/sessions/{session_id}/prophecy", params={"stream": 1})
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("multipart/x-mixed-replace")
        assert response.headers["X-Frame-Count"] == "5"
        assert response.headers["X-Fps"] == "5"
        content = response.content
        assert content.count(b"Content-Type: image/x-portable-pixmap") == 5
        assert content.count(b"P6\n") == 5
        assert content.endswith(b"--prophecy-frame--\r\n")

    def test_viewed_archives_and_completes(self, api):
        client, state = api
        before = len(state.archive)
        session_id, body = complete_session(client)
        assert body["state"] == "completed"
        assert body["veil"] == "medium_visible"
        assert body["archive_id"] == session_id
        assert len(state.archive) == before + 1
        assert state.archive.get(session_id).prophecy_text == body["prophecy_text"]

    def test_viewed_twice_conflicts(self, api):
        client, _state = api
        session_id, _body = complete_session(client)
        response = client.post(f"/v1/sessions/{session_id}/viewed")
        assert response.status_code == 409

    def test_viewed_before_viewing_conflicts(self, api):
        client, _state = api
        session_id = new_session(client)
        submit_question(client, session_id)
        wait_for_state(client, session_id, ("ready",))
        assert client.post(f"/v1/sessions/{session_id}/viewed").status_code == 409

    def test_archiving_can_be_disabled(self, make_api):
        client, state = make_api(archive_enabled=False)
        _session_id, body = complete_session(client)
        assert body["archive_id"] is None
        assert len(state.archive) == 0


class TestArchiveEndpoints:
    def test_pagination_over_http(self, api):
        client, _state = api
        ids = [complete_session(client, seed=seed)[0] for seed in range(5)]

        first = client.get("/v1/archive", params={"limit": 2}).json()
        assert [e["id"] for e in first["entries"]] == [ids[4], ids[3]]
        assert first["next_cursor"]

        second = client.get(
            "/v1/archive", params={"limit": 2, "cursor": first["next_cursor"]}
        ).json()
        assert [e["id"] for e in second["entries"]] == [ids[2], ids[1]]

        third = client.get(
            "/v1/archive", params={"limit": 2, "cursor": second["next_cursor"]}
        ).json()
        assert [e["id"] for e in third["entries"]] == [ids[0]]
        assert third["next_cursor"] is None

    def test_limit_zero_rejected(self, api):
        client, _state = api
        response = client.get("/v1/archive", params={"limit": 0})
        assert response.status_code == 400
        assert response.json()["code"] == "bad_parameters"

    def test_garbage_cursor_rejected(self, api):
        client, _state = api
        response = client.get("/v1/archive", params={"cursor": "@@@@"})
        assert response.status_code == 400
        assert response.json()["code"] == "bad_cursor"

    def test_sample_is_deterministic_over_http(self, api):
        client, _state = api
        for seed in range(3):
            complete_session(client, seed=seed)
        first = client.get("/v1/archive/sample", params={"n": 5, "seed": 7})
        second = client.get("/v1/archive/sample", params={"n": 5, "seed": 7})
        assert first.json() == second.json()
        assert len(first.json()["entries"]) == 3

    def test_sample_bad_n(self, api):
        client, _state = api
        assert client.get("/v1/archive/sample", params={"n": 0}).status_code == 400

    def test_archive_video_fetch(self, api):
        client, _state = api
        session_id, _body = complete_session(client)
        entry = client.get("/v1/archive").json()["entries"][0]
        response = client.get(f"/v1/archive/{entry['id']}/video")
        assert response.status_code == 200
        assert hashlib.sha256(response.content).hexdigest() == entry["video_ref"]
        assert response.headers["X-Blob-Digest"] == entry["video_ref"]

    def test_archive_video_unknown_id(self, api):
        client, _state = api
        response = client.get(f"/v1/archive/{SessionId.new()}/video")
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"


class TestIdleGc:
    def test_idle_sessions_dropped_without_archiving(self, make_api):
        client, state = make_api(idle_timeout_s=0.05)
        stale = new_session(client)
        time.sleep(0.15)
        # GC runs when new sessions are created.
        new_session(client)
        assert client.get(f"/v1/sessions/{stale}").status_code == 404
        assert len(state.archive) == 0

    def test_active_sessions_survive_sweeps(self, make_api):
        client, _state = make_api(idle_timeout_s=60.0)
        session_id = new_session(client)
        new_session(client)
        assert client.get(f"/v1/sessions/{session_id}").status_code == 200


class TestHealth:
    def test_shape(self, api):
        client, _state = api
        body = client.get("/healthz").json()
        assert body == {"status": "ok", "live_sessions": 0, "queue_depth": 0}

    def test_counts_live_sessions(self, api):
        client, _state = api
        new_session(client)
        new_session(client)
        assert client.get("/healthz").json()["live_sessions"] == 2


class TestErrorShape:
    def test_every_error_shares_one_shape(self, api):
        client, _state = api
        errors = [
            client.get(f"/v1/sessions/{SessionId.new()}"),
            client.get("/v1/archive", params={"limit": 0}),
            client.get("/v1/archive", params={"cursor": "!"}),
            client.get(f"/v1/archive/{SessionId.new()}/video"),
            client.post(f"/v1/sessions/{SessionId.new()}/view"),
        ]
        for response in errors:
            assert response.status_code >= 400
            body = response.json()
            assert set(body) <= {"code", "message", "details"}
            assert isinstance(body["code"], str) and body["code"]
            assert isinstance(body["message"], str) and body["message"]


class TestWireLevelFsm:
    def test_random_call_sequences_follow_the_transition_table(self, api):
        client, _state = api
        rng = random.Random(4)
        state_values = {s.value: s for s in SessionState}

        for _trial in range(10):
            session_id = new_session(client)
            observed = [client.get(f"/v1/sessions/{session_id}").json()["state"]]
            for _step in range(8):
                op = rng.choice(("question", "view", "viewed", "prophecy", "status"))
                if op == "question":
                    submit_question(client, session_id, seed=rng.randrange(100))
                elif op == "view":
                    client.post(f"/v1/sessions/{session_id}/view")
                elif op == "viewed":
                    client.post(f"/v1/sessions/{session_id}/viewed")
                elif op == "prophecy":
                    client.get(f"/v1/sessions/{session_id}/prophecy")
                observed.append(
                    client.get(f"/v1/sessions/{session_id}").json()["state"]
                )
                time.sleep(rng.uniform(0, 0.02))

            for before, after in zip(observed, observed[1:]):
                from_state = state_values[before]
                to_state = state_values[after]
                assert to_state is from_state or to_state in reachable(from_state), (
                    f"observed impossible move {before} -> {after}"
                )

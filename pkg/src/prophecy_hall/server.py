"""HTTP boundary between the virtual space and the generation server.

Poll-based JSON API. Fast in-memory endpoints (create, question, status,
view) run on the event loop; anything touching disk (archive, blobs,
prophecy downloads) runs as plain sync handlers in the thread pool.
Generation itself never runs on a request path: the question endpoint
hands the pipeline to the orchestrator's worker pool and returns.
"""

from __future__ import annotations

import math
import secrets
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .archive import BlobStore, ProphecyArchive
from .backends import make_text_generator, make_transcriber, make_video_renderer
from .config import ServiceConfig
from .domain import ArchiveEntry, SessionId, SessionState, parse_wav, utc_now
from .errors import (
    BadParameters,
    HallError,
    InvalidTransition,
    NotReady,
    SessionNotFound,
)
from .frames import parse_frame_archive
from .fsm import SessionEvent, veil_state
from .orchestrator import Orchestrator, SessionStore
from .prompts import TemplateLoader

_HTTP_STATUS: dict[str, int] = {
    "bad_cursor": 400,
    "bad_parameters": 400,
    "session_not_found": 404,
    "not_found": 404,
    "invalid_transition": 409,
    "not_ready": 409,
    "duplicate_id": 409,
    "empty_payload": 422,
    "audio_too_short": 422,
    "audio_too_long": 422,
    "unsupported_format": 422,
    "question_too_long": 422,
    "no_speech_detected": 422,
    "capacity_exceeded": 503,
    "storage_full": 507,
}

_VIEWABLE = frozenset(
    {SessionState.READY, SessionState.VIEWING, SessionState.COMPLETED}
)


@dataclass
class AppState:
    config: ServiceConfig
    store: SessionStore
    blobs: BlobStore
    archive: ProphecyArchive
    orchestrator: Orchestrator
    templates: TemplateLoader
    last_seen: dict[SessionId, float] = field(default_factory=dict)
    seen_lock: threading.Lock = field(default_factory=threading.Lock)

    def touch(self, session_id: SessionId) -> None:
        with self.seen_lock:
            self.last_seen[session_id] = time.monotonic()

    def sweep_idle(self) -> int:
        """Drop sessions nobody has touched (request or event) for the idle window.

        A swept session is simply forgotten; it is never archived.
        """
        idle_s = self.config.idle_timeout_s
        now_mono = time.monotonic()
        now_wall = utc_now().timestamp()
        dropped = 0
        for session_id, session in self.store.items():
            with self.seen_lock:
                seen = self.last_seen.get(session_id)
            quiet_requests = seen is None or (now_mono - seen) > idle_s
            quiet_events = (now_wall - session.updated_at.timestamp()) > idle_s
            if quiet_requests and quiet_events:
                self.store.remove(session_id)
                with self.seen_lock:
                    self.last_seen.pop(session_id, None)
                dropped += 1
        return dropped

    def close(self) -> None:
        self.orchestrator.close()
        self.archive.close()


def create_state(config: ServiceConfig) -> AppState:
    config.data_dir.mkdir(parents=True, exist_ok=True)
    blobs = BlobStore(config.data_dir / "blobs")
    archive = ProphecyArchive(config.data_dir, blobs, snapshot_every=config.snapshot_every)
    store = SessionStore(capacity=config.capacity, idle_timeout_s=config.idle_timeout_s)
    orchestrator = Orchestrator(
        store,
        make_transcriber(config.transcriber, config.remote_timeout_s),
        make_text_generator(config.text_generator, config.remote_timeout_s),
        make_video_renderer(
            config.video_renderer,
            config.remote_timeout_s,
            blobs,
            width=config.video.width,
            height=config.video.height,
            simulated_rate=config.video.simulated_rate,
        ),
        eta_model=config.eta,
        video_concurrency=config.video_concurrency,
        workers=config.pipeline_workers,
    )
    return AppState(
        config=config,
        store=store,
        blobs=blobs,
        archive=archive,
        orchestrator=orchestrator,
        templates=TemplateLoader(config.template_path),
    )


def _parse_session_id(raw: str) -> SessionId:
    try:
        return SessionId.parse(raw)
    except ValueError:
        raise SessionNotFound(f"no session {raw!r}") from None


def _multipart_stream(archive_bytes: bytes) -> StreamingResponse:
    manifest, frames = parse_frame_archive(archive_bytes)
    boundary = "prophecy-frame"
    interval = 1.0 / manifest.fps

    def generate():
        for frame in frames:
            head = (
                f"--{boundary}\r\n"
                "Content-Type: image/x-portable-pixmap\r\n"
                f"Content-Length: {len(frame)}\r\n\r\n"
            )
            yield head.encode("ascii") + frame + b"\r\n"
            time.sleep(interval)
        yield f"--{boundary}--\r\n".encode("ascii")

    return StreamingResponse(
        generate(),
        media_type=f"multipart/x-mixed-replace; boundary={boundary}",
        headers={"X-Frame-Count": str(manifest.frame_count), "X-Fps": str(manifest.fps)},
    )


def create_app(state: AppState) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        state.close()

    app = FastAPI(title="prophecy-hall", lifespan=lifespan)
    app.state.hall = state
    config = state.config

    @app.exception_handler(HallError)
    async def hall_error_handler(_request: Request, exc: HallError):
        status = _HTTP_STATUS.get(exc.code, 500)
        headers = {"Retry-After": "1"} if status == 503 else None
        return JSONResponse(status_code=status, content=exc.to_dict(), headers=headers)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "code": "bad_parameters",
                "message": "request parameters failed validation",
                "details": {"errors": [str(e.get("loc")) for e in exc.errors()]},
            },
        )

    def status_body(session_id: SessionId) -> tuple[dict, float]:
        session, eta, frac = state.orchestrator.describe(
            session_id, config.video.duration_s
        )
        body = {
            "session_id": str(session.id),
            "state": session.state.value,
            "veil": veil_state(session.state).value,
            "eta_s": round(eta, 3),
            "progress": round(frac, 4),
        }
        if session.state is SessionState.FAILED:
            stage, reason = session.failure or ("unknown", "unknown")
            body["error"] = {"stage": stage, "reason": reason}
        return body, eta

    def poll_hint(eta: float) -> dict[str, str]:
        # Suggest a poll interval: soon when the reveal is near, capped at 5 s.
        return {"Retry-After": str(max(1, min(5, math.ceil(eta / 4))))}

    # -- session lifecycle ------------------------------------------------

    @app.post("/v1/sessions", status_code=201)
    async def create_session():
        state.sweep_idle()
        session = state.store.create()
        state.touch(session.id)
        return JSONResponse(
            status_code=201,
            content={"session_id": str(session.id)},
            headers={"Location": f"/v1/sessions/{session.id}"},
        )

    @app.post("/v1/sessions/{raw_id}/question", status_code=202)
    async def submit_question(raw_id: str, request: Request, seed: int | None = None):
        session_id = _parse_session_id(raw_id)
        state.touch(session_id)
        state.store.get(session_id)  # 404 before reading the body
        clip = parse_wav(await request.body())
        # Applying the event is the one-question gate: losers get 409 here.
        state.store.apply(session_id, SessionEvent.question_submitted())
        state.orchestrator.submit(
            session_id,
            clip,
            state.templates.load(),
            seed if seed is not None else secrets.randbits(63),
            config.video.duration_s,
            config.video.fps,
        )
        body, eta = status_body(session_id)
        return JSONResponse(status_code=202, content=body, headers=poll_hint(eta))

    @app.get("/v1/sessions/{raw_id}")
    async def get_status(raw_id: str):
        session_id = _parse_session_id(raw_id)
        state.touch(session_id)
        body, eta = status_body(session_id)
        headers = poll_hint(eta) if body["state"] in (
            "awaiting_question", "transcribing", "generating_text", "generating_video"
        ) else {}
        return JSONResponse(content=body, headers=headers)

    @app.post("/v1/sessions/{raw_id}/view")
    async def start_viewing(raw_id: str):
        session_id = _parse_session_id(raw_id)
        state.touch(session_id)
        state.store.apply(session_id, SessionEvent.view_started())
        body, _eta = status_body(session_id)
        return body

    @app.get("/v1/sessions/{raw_id}/prophecy")
    def fetch_prophecy(raw_id: str, stream: int = 0):
        session_id = _parse_session_id(raw_id)
        state.touch(session_id)
        session = state.store.get(session_id)
        if session.state not in _VIEWABLE or session.video is None:
            raise NotReady(
                f"prophecy not available in state {session.state.value!r}",
                state=session.state.value,
            )
        data = state.blobs.get(session.video.blob_ref)
        if stream:
            return _multipart_stream(data)
        return Response(
            content=data,
            media_type="application/zip",
            headers={"X-Blob-Digest": session.video.blob_ref},
        )

    @app.post("/v1/sessions/{raw_id}/viewed")
    def finish_viewing(raw_id: str):
        session_id = _parse_session_id(raw_id)
        state.touch(session_id)
        lock = state.store.session_lock(session_id)
        with lock:
            session = state.store.get(session_id)
            if session.state is not SessionState.VIEWING:
                raise InvalidTransition(session.state.value, "view_finished")
            assert session.prophecy is not None and session.video is not None
            state.store.apply(session_id, SessionEvent.view_finished())
        archive_id = None
        if config.archive_enabled:
            entry = ArchiveEntry(
                id=session.id,
                prophecy_text=session.prophecy.text,
                video_ref=session.video.blob_ref,
                created_at=utc_now(),
            )
            state.archive.append(entry)
            archive_id = str(entry.id)
        return {
            "archive_id": archive_id,
            "prophecy_text": session.prophecy.text,
            "state": SessionState.COMPLETED.value,
            "veil": veil_state(SessionState.COMPLETED).value,
        }

    # -- archive ----------------------------------------------------------

    @app.get("/v1/archive")
    def list_archive(limit: int = 20, cursor: str | None = None):
        try:
            page = state.archive.list(cursor=cursor, limit=limit)
        except ValueError as exc:
            raise BadParameters(str(exc)) from None
        return {
            "entries": [entry.to_dict() for entry in page.entries],
            "next_cursor": page.next_cursor,
        }

    @app.get("/v1/archive/sample")
    def sample_archive(n: int = 8, seed: int = 0):
        try:
            entries = state.archive.sample_for_display(n, seed)
        except ValueError as exc:
            raise BadParameters(str(exc)) from None
        return {"entries": [entry.to_dict() for entry in entries]}

    @app.get("/v1/archive/{entry_id}/video")
    def fetch_archive_video(entry_id: str, stream: int = 0):
        entry = state.archive.get(entry_id)
        data = state.archive.fetch_video(entry.video_ref)
        if stream:
            return _multipart_stream(data)
        return Response(
            content=data,
            media_type="application/zip",
            headers={"X-Blob-Digest": entry.video_ref},
        )

    # -- operational ------------------------------------------------------

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "live_sessions": state.store.live_count(),
            "queue_depth": state.orchestrator.video_slots.waiting(),
        }

    if config.ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app


def build_app(config: ServiceConfig | None = None) -> FastAPI:
    """Convenience: wire a full state from config and return the app."""
    return create_app(create_state(config or ServiceConfig()))

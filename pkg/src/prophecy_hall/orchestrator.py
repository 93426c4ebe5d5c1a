"""Three-stage pipeline driver.

Owns session state transitions end to end: backends compute, the
orchestrator applies events. One pipeline per session; stages strictly
sequential within it; concurrent video renders bounded by a FIFO slot
pool that models a single GPU server.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from .domain import AudioClip, PromptTemplate, SessionId, VideoJob, utc_now
from .errors import (
    CapacityExceeded,
    EmptyPrompt,
    HallError,
    NoSpeechDetected,
    QuestionTooLong,
    SessionNotFound,
    StageTimeout,
)
from .fsm import (
    GENERATING_STATES,
    TERMINAL_STATES,
    Session,
    SessionEvent,
    SessionState,
    apply_event,
    create_session,
)
from .prompts import assemble_prompt

log = logging.getLogger(__name__)

_U64 = (1 << 64) - 1


class StageName(str, Enum):
    TRANSCRIBE = "transcribe"
    TEXTGEN = "textgen"
    VIDEOGEN = "videogen"


STAGE_ORDER: tuple[StageName, ...] = (
    StageName.TRANSCRIBE,
    StageName.TEXTGEN,
    StageName.VIDEOGEN,
)

_STATE_STAGE: dict[SessionState, int] = {
    SessionState.TRANSCRIBING: 0,
    SessionState.GENERATING_TEXT: 1,
    SessionState.GENERATING_VIDEO: 2,
}


@dataclass(frozen=True)
class StagePolicy:
    """Per-stage timeout and retry budget."""

    timeout_s: dict[StageName, float] = field(
        default_factory=lambda: {
            StageName.TRANSCRIBE: 30.0,
            StageName.TEXTGEN: 60.0,
            # Must exceed the ~120 s a 30 s render takes, with headroom.
            StageName.VIDEOGEN: 600.0,
        }
    )
    max_retries: dict[StageName, int] = field(
        default_factory=lambda: {stage: 1 for stage in STAGE_ORDER}
    )
    retry_backoff_s: float = 0.5

    def __post_init__(self):
        for stage in STAGE_ORDER:
            if self.timeout_s[stage] <= 0:
                raise ValueError(f"timeout_s[{stage.value}] must be > 0")
            if self.max_retries[stage] < 0:
                raise ValueError(f"max_retries[{stage.value}] must be >= 0")
        if self.retry_backoff_s < 0:
            raise ValueError("retry_backoff_s must be >= 0")


@dataclass(frozen=True)
class EtaModel:
    """Latency model for the remaining-time estimate shown to visitors.

    video_rate is wall seconds per second of output video; the default 4.0
    reproduces a 30 s render taking 120 s.
    """

    transcribe_est_s: float = 5.0
    textgen_est_s: float = 10.0
    video_rate: float = 4.0

    def stage_estimates(self, video_duration_s: float) -> tuple[float, float, float]:
        return (
            self.transcribe_est_s,
            self.textgen_est_s,
            self.video_rate * video_duration_s,
        )


def stage_seed(seed: int, stage_index: int) -> int:
    """Derive a per-stage seed via one splitmix64 step over (seed, index)."""
    z = (seed + (stage_index + 1) * 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return (z ^ (z >> 31)) & _U64


def _eta_for_duration(
    state: SessionState, duration_s: float, model: EtaModel, elapsed_in_stage_s: float
) -> float:
    if elapsed_in_stage_s < 0:
        raise ValueError("elapsed_in_stage_s must be >= 0")
    estimates = model.stage_estimates(duration_s)
    if state is SessionState.AWAITING_QUESTION:
        return float(sum(estimates))
    index = _STATE_STAGE.get(state)
    if index is None:
        # Ready and everything after it: nothing left to wait for.
        return 0.0
    remaining = max(0.0, estimates[index] - elapsed_in_stage_s)
    remaining += sum(estimates[index + 1:])
    return float(remaining)


def _progress_for_duration(
    state: SessionState, duration_s: float, model: EtaModel, elapsed_in_stage_s: float
) -> float:
    total = float(sum(model.stage_estimates(duration_s)))
    if total <= 0:
        return 1.0
    remaining = _eta_for_duration(state, duration_s, model, elapsed_in_stage_s)
    return min(1.0, max(0.0, 1.0 - remaining / total))


def estimate_eta(
    state: SessionState, job: VideoJob, model: EtaModel, elapsed_in_stage_s: float
) -> float:
    """Remaining seconds: time left in the current stage plus all later stages."""
    return _eta_for_duration(state, job.target_duration_s, model, elapsed_in_stage_s)


def progress(
    state: SessionState, model: EtaModel, job: VideoJob, elapsed_in_stage_s: float
) -> float:
    return _progress_for_duration(state, job.target_duration_s, model, elapsed_in_stage_s)


class FifoSlots:
    """Counted slots granted strictly in arrival order."""

    def __init__(self, limit: int):
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self.limit = limit
        self._cond = threading.Condition()
        self._waiting: deque[object] = deque()
        self._held = 0

    def acquire(self, token: object, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            self._waiting.append(token)
            while not (self._held < self.limit and self._waiting[0] is token):
                wait_for = None
                if deadline is not None:
                    wait_for = deadline - time.monotonic()
                    if wait_for <= 0:
                        self._waiting.remove(token)
                        self._cond.notify_all()
                        return False
                self._cond.wait(wait_for)
            self._waiting.popleft()
            self._held += 1
            self._cond.notify_all()
            return True

    def release(self) -> None:
        with self._cond:
            if self._held <= 0:
                raise RuntimeError("release without acquire")
            self._held -= 1
            self._cond.notify_all()

    def held(self) -> int:
        with self._cond:
            return self._held

    def waiting(self) -> int:
        with self._cond:
            return len(self._waiting)

    def position(self, token: object) -> int | None:
        """0-based place in line, or None once granted (or never queued)."""
        with self._cond:
            for index, waiting in enumerate(self._waiting):
                if waiting is token:
                    return index
            return None


class SessionStore:
    """Thread-safe session map with a live-session capacity and idle GC."""

    def __init__(self, capacity: int = 256, idle_timeout_s: float = 1800.0):
        self.capacity = capacity
        self.idle_timeout_s = idle_timeout_s
        self._lock = threading.Lock()
        self._sessions: dict[SessionId, Session] = {}
        self._session_locks: dict[SessionId, threading.RLock] = {}

    def create(self, now=None) -> Session:
        with self._lock:
            if self._live_count_locked() >= self.capacity:
                raise CapacityExceeded(
                    f"at capacity ({self.capacity} live sessions)",
                    capacity=self.capacity,
                )
            session = create_session(now or utc_now())
            self._sessions[session.id] = session
            self._session_locks[session.id] = threading.RLock()
            return session

    def _live_count_locked(self) -> int:
        return sum(1 for s in self._sessions.values() if s.state not in TERMINAL_STATES)

    def live_count(self) -> int:
        with self._lock:
            return self._live_count_locked()

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)

    def get(self, session_id: SessionId) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"no session {session_id}")
        return session

    def session_lock(self, session_id: SessionId) -> threading.RLock:
        with self._lock:
            lock = self._session_locks.get(session_id)
        if lock is None:
            raise SessionNotFound(f"no session {session_id}")
        return lock

    def apply(self, session_id: SessionId, event: SessionEvent, now=None) -> Session:
        lock = self.session_lock(session_id)
        with lock:
            session = self.get(session_id)
            updated = apply_event(session, event, now or utc_now())
            with self._lock:
                # GC may have dropped the session while we applied; don't resurrect.
                if session_id not in self._sessions:
                    raise SessionNotFound(f"no session {session_id}")
                self._sessions[session_id] = updated
            return updated

    def remove(self, session_id: SessionId) -> None:
        with self._lock:
            self._sessions.pop(session_id, None)
            self._session_locks.pop(session_id, None)

    def items(self) -> list[tuple[SessionId, Session]]:
        with self._lock:
            return list(self._sessions.items())

    def sweep(self, now=None) -> int:
        """Drop sessions idle longer than the timeout. Returns how many."""
        cutoff = (now or utc_now()).timestamp() - self.idle_timeout_s
        with self._lock:
            stale = [
                sid for sid, s in self._sessions.items()
                if s.updated_at.timestamp() < cutoff
            ]
            for sid in stale:
                del self._sessions[sid]
                del self._session_locks[sid]
        if stale:
            log.info("swept %d idle session(s)", len(stale))
        return len(stale)


# Deterministic failures that a retry cannot fix.
_NO_RETRY = (NoSpeechDetected, EmptyPrompt, QuestionTooLong)


@dataclass
class _Tracker:
    """Wall-clock bookkeeping for one running pipeline, used by ETA reporting."""

    stage_started: float = 0.0
    queue_token: object | None = None
    rendering: bool = False


class Orchestrator:
    def __init__(
        self,
        store: SessionStore,
        transcriber,
        text_generator,
        video_renderer,
        *,
        eta_model: EtaModel | None = None,
        policy: StagePolicy | None = None,
        video_concurrency: int = 2,
        workers: int = 8,
    ):
        self.store = store
        self.transcriber = transcriber
        self.text_generator = text_generator
        self.video_renderer = video_renderer
        self.eta_model = eta_model or EtaModel()
        self.policy = policy or StagePolicy()
        self.video_slots = FifoSlots(video_concurrency)
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="pipeline")
        self._trackers: dict[SessionId, _Tracker] = {}
        self._trackers_lock = threading.Lock()

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- status ----------------------------------------------------------

    def describe(
        self, session_id: SessionId, video_duration_s: float
    ) -> tuple[Session, float, float]:
        """(session, eta_s, progress) for polling clients.

        While a render is queued behind the slot pool the elapsed clock is
        held at zero and an estimated queue wait is added on top.
        """
        session = self.store.get(session_id)
        with self._trackers_lock:
            tracker = self._trackers.get(session_id)

        elapsed = 0.0
        queue_wait = 0.0
        if tracker is not None and session.state in GENERATING_STATES:
            token = tracker.queue_token
            if session.state is SessionState.GENERATING_VIDEO and token is not None:
                place = self.video_slots.position(token)
                if place is not None:
                    # Crude single-server model: everyone ahead of us renders
                    # at full length, `limit` at a time.
                    per_render = self.eta_model.video_rate * video_duration_s
                    queue_wait = (place // self.video_slots.limit + 1) * per_render
            else:
                elapsed = max(0.0, time.monotonic() - tracker.stage_started)

        eta = _eta_for_duration(session.state, video_duration_s, self.eta_model, elapsed)
        eta += queue_wait
        if session.state in GENERATING_STATES:
            # Never advertise "0 seconds left" for work still running.
            eta = max(eta, 1.0)
        frac = _progress_for_duration(
            session.state, video_duration_s, self.eta_model, elapsed
        )
        return session, eta, frac

    # -- pipeline --------------------------------------------------------

    def submit(
        self,
        session_id: SessionId,
        clip: AudioClip,
        template: PromptTemplate,
        seed: int,
        duration_s: float = 30.0,
        fps: int = 10,
    ) -> Future:
        return self._pool.submit(
            self.run_pipeline, session_id, clip, template, seed, duration_s, fps
        )

    def run_pipeline(
        self,
        session_id: SessionId,
        clip: AudioClip,
        template: PromptTemplate,
        seed: int,
        duration_s: float = 30.0,
        fps: int = 10,
    ) -> Session:
        """Drive one session to Ready or Failed. Never raises for stage errors."""
        session = self.store.get(session_id)
        if session.state is SessionState.AWAITING_QUESTION:
            session = self.store.apply(session_id, SessionEvent.question_submitted())

        tracker = _Tracker(stage_started=time.monotonic())
        with self._trackers_lock:
            self._trackers[session_id] = tracker

        try:
            question = self._run_stage(
                StageName.TRANSCRIBE,
                session_id,
                lambda cancelled: self.transcriber.transcribe_translate(
                    clip, stage_seed(seed, 0)
                ),
            )
            session = self.store.apply(
                session_id, SessionEvent.transcription_done(question)
            )
            tracker.stage_started = time.monotonic()

            prophecy = self._run_stage(
                StageName.TEXTGEN,
                session_id,
                lambda cancelled: self.text_generator.generate_prophecy(
                    assemble_prompt(template, question), stage_seed(seed, 1)
                ),
            )
            session = self.store.apply(session_id, SessionEvent.text_done(prophecy))
            tracker.stage_started = time.monotonic()

            job = VideoJob(
                prophecy=prophecy,
                target_duration_s=duration_s,
                fps=fps,
                seed=stage_seed(seed, 2),
            )
            artifact = self._run_stage(
                StageName.VIDEOGEN,
                session_id,
                lambda cancelled: self._render_with_slot(
                    session_id, tracker, job, cancelled
                ),
            )
            session = self.store.apply(session_id, SessionEvent.video_done(artifact))
            return session
        except _StageFailed as failure:
            return self.store.apply(
                session_id,
                SessionEvent.stage_failed(failure.stage.value, failure.reason),
            )
        finally:
            with self._trackers_lock:
                self._trackers.pop(session_id, None)

    def _render_with_slot(self, session_id, tracker, job: VideoJob, cancelled):
        token = object()
        tracker.queue_token = token
        try:
            granted = self.video_slots.acquire(
                token, timeout=self.policy.timeout_s[StageName.VIDEOGEN]
            )
        finally:
            tracker.queue_token = None
        if not granted:
            raise StageTimeout("timed out waiting for a render slot")
        if cancelled.is_set():
            # The attempt was abandoned while we sat in line; hand the slot back.
            self.video_slots.release()
            raise StageTimeout("attempt abandoned before render started")
        tracker.stage_started = time.monotonic()
        tracker.rendering = True
        try:
            return self.video_renderer.render_video(job)
        finally:
            tracker.rendering = False
            self.video_slots.release()

    def _run_stage(self, stage: StageName, session_id: SessionId, attempt_fn):
        attempts = 1 + self.policy.max_retries[stage]
        timeout_s = self.policy.timeout_s[stage]
        last_error: BaseException | None = None
        for attempt in range(attempts):
            if attempt > 0 and self.policy.retry_backoff_s > 0:
                time.sleep(self.policy.retry_backoff_s)
            try:
                return self._timed_attempt(attempt_fn, timeout_s)
            except _NO_RETRY as exc:
                last_error = exc
                break
            except Exception as exc:
                last_error = exc
                log.warning(
                    "session %s stage %s attempt %d/%d failed: %s",
                    session_id, stage.value, attempt + 1, attempts, exc,
                )
        assert last_error is not None
        reason = (
            f"{last_error.code}: {last_error}"
            if isinstance(last_error, HallError)
            else f"{type(last_error).__name__}: {last_error}"
        )
        raise _StageFailed(stage, reason, last_error)

    @staticmethod
    def _timed_attempt(attempt_fn, timeout_s: float):
        """Run one attempt in a worker thread with a hard deadline.

        A timed-out attempt is abandoned, not interrupted; attempt_fn gets a
        cancellation event so it can bail out at its next safe point.
        """
        outcome: dict = {}
        done = threading.Event()
        cancelled = threading.Event()

        def runner():
            try:
                outcome["value"] = attempt_fn(cancelled)
            except BaseException as exc:
                outcome["error"] = exc
            finally:
                done.set()

        thread = threading.Thread(target=runner, daemon=True)
        thread.start()
        if not done.wait(timeout_s):
            cancelled.set()
            raise StageTimeout(f"stage attempt exceeded {timeout_s:g}s")
        if "error" in outcome:
            raise outcome["error"]
        return outcome["value"]


class _StageFailed(Exception):
    def __init__(self, stage: StageName, reason: str, cause: BaseException):
        super().__init__(reason)
        self.stage = stage
        self.reason = reason
        self.cause = cause

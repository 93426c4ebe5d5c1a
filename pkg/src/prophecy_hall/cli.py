"""hallctl: operator and test client for the prophecy service.

Drives complete visitor sessions against a running server (or an
embedded in-process one), generates fixture audio, runs load tests, and
inspects the archive. Machine-readable output is JSON on stdout;
diagnostics go to stderr. Exit codes: 0 success, 1 session failed,
2 transport or I/O error.
"""

from __future__ import annotations

import concurrent.futures
import contextlib
import hashlib
import json
import math
import random
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import click
import requests
import uvicorn

from .backends.fixtures import build_fixture_wav
from .config import ServiceConfig, load_config
from .server import create_app, create_state

_GENERATING = ("transcribing", "generating_text", "generating_video")
_STAGE_KEYS = _GENERATING + ("total",)


class TransportError(Exception):
    pass


class HallClient:
    """Thin REST client with 503 backoff and Retry-After-aware polling."""

    def __init__(
        self,
        base_url: str,
        *,
        timeout_s: float = 30.0,
        busy_deadline_s: float = 120.0,
        rng: random.Random | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.busy_deadline_s = busy_deadline_s
        self._rng = rng or random.Random()
        self._http = requests.Session()

    def close(self) -> None:
        self._http.close()

    def _request(self, method: str, path: str, **kwargs) -> requests.Response:
        """One API call; waits out 503s with jittered exponential backoff."""
        url = self.base_url + path
        kwargs.setdefault("timeout", self.timeout_s)
        delay = 0.1
        deadline = time.monotonic() + self.busy_deadline_s
        while True:
            try:
                response = self._http.request(method, url, **kwargs)
            except requests.RequestException as exc:
                raise TransportError(f"{method} {url}: {exc}") from exc
            if response.status_code != 503:
                return response
            if time.monotonic() >= deadline:
                raise TransportError(f"{method} {url}: server still busy after backoff")
            time.sleep(self._rng.uniform(0, delay))
            delay = min(delay * 2, 5.0)

    @staticmethod
    def _error_text(response: requests.Response) -> str:
        try:
            body = response.json()
            return f"{body.get('code', '?')}: {body.get('message', '')}"
        except ValueError:
            return response.text[:200]

    def _expect(self, response: requests.Response, *codes: int) -> requests.Response:
        if response.status_code not in codes:
            raise TransportError(
                f"unexpected HTTP {response.status_code} "
                f"({self._error_text(response)})"
            )
        return response

    def create_session(self) -> str:
        response = self._expect(self._request("POST", "/v1/sessions"), 201)
        return response.json()["session_id"]

    def submit_question(self, session_id: str, wav: bytes, seed: int | None) -> dict:
        path = f"/v1/sessions/{session_id}/question"
        if seed is not None:
            path += f"?seed={seed}"
        response = self._request(
            "POST", path, data=wav, headers={"Content-Type": "audio/wav"}
        )
        return self._expect(response, 202).json()

    def status(self, session_id: str) -> tuple[dict, float | None]:
        response = self._expect(self._request("GET", f"/v1/sessions/{session_id}"), 200)
        retry_after = response.headers.get("Retry-After")
        return response.json(), float(retry_after) if retry_after else None

    def wait_ready(
        self,
        session_id: str,
        *,
        deadline_s: float = 900.0,
        max_interval_s: float = 2.0,
        observer=None,
    ) -> dict:
        """Poll until Ready or Failed, honoring the server's Retry-After hint."""
        deadline = time.monotonic() + deadline_s
        while True:
            body, retry_after = self.status(session_id)
            if observer is not None:
                observer(time.monotonic(), body["state"])
            if body["state"] in ("ready", "failed"):
                return body
            if time.monotonic() >= deadline:
                raise TransportError(f"session {session_id} not ready after {deadline_s}s")
            time.sleep(min(retry_after or 0.25, max_interval_s))

    def view(self, session_id: str) -> dict:
        return self._expect(
            self._request("POST", f"/v1/sessions/{session_id}/view"), 200
        ).json()

    def fetch_prophecy(self, session_id: str) -> tuple[bytes, str]:
        response = self._expect(
            self._request("GET", f"/v1/sessions/{session_id}/prophecy"), 200
        )
        return response.content, response.headers.get("X-Blob-Digest", "")

    def viewed(self, session_id: str) -> dict:
        return self._expect(
            self._request("POST", f"/v1/sessions/{session_id}/viewed"), 200
        ).json()

    def archive_page(self, limit: int = 50, cursor: str | None = None) -> dict:
        path = f"/v1/archive?limit={limit}"
        if cursor:
            path += f"&cursor={cursor}"
        return self._expect(self._request("GET", path), 200).json()


@contextlib.contextmanager
def embedded_server(config: ServiceConfig | None = None, state=None):
    """Run the full service on an ephemeral port inside this process.

    Pass a prebuilt ``state`` to observe or instrument the running service
    (the config argument is ignored then).
    """
    if state is None:
        state = create_state(config or ServiceConfig())
    app = create_app(state)
    uv_config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=server.run, daemon=True, name="hall-embedded")
    thread.start()
    try:
        deadline = time.monotonic() + 15
        while not server.started:
            if time.monotonic() >= deadline or not thread.is_alive():
                raise TransportError("embedded server failed to start")
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)


# -- session driving ------------------------------------------------------


@dataclass
class AskOutcome:
    session_id: str
    completed: bool
    prophecy_text: str = ""
    digest: str = ""
    digest_ok: bool = False
    failure: str = ""
    stage_times: dict[str, float] = field(default_factory=dict)


def drive_session(
    client: HallClient,
    wav: bytes,
    seed: int | None,
    out_path: Path | None = None,
    deadline_s: float = 900.0,
) -> AskOutcome:
    """Run one full visitor journey: ask, wait, view, download, confirm."""
    observations: list[tuple[float, str]] = []

    session_id = client.create_session()
    t_submit = time.monotonic()
    body = client.submit_question(session_id, wav, seed)
    observations.append((time.monotonic(), body["state"]))
    final = client.wait_ready(
        session_id,
        deadline_s=deadline_s,
        observer=lambda ts, state: observations.append((ts, state)),
    )
    if final["state"] == "failed":
        error = final.get("error") or {}
        return AskOutcome(
            session_id=session_id,
            completed=False,
            failure=f"{error.get('stage', '?')}: {error.get('reason', 'unknown')}",
        )
    t_ready = time.monotonic()

    client.view(session_id)
    archive_bytes, digest = client.fetch_prophecy(session_id)
    digest_ok = hashlib.sha256(archive_bytes).hexdigest() == digest
    if out_path is not None:
        out_path.write_bytes(archive_bytes)
    # Never leave the session parked in Viewing.
    viewed = client.viewed(session_id)

    return AskOutcome(
        session_id=session_id,
        completed=True,
        prophecy_text=viewed.get("prophecy_text", ""),
        digest=digest,
        digest_ok=digest_ok,
        stage_times=_stage_times(t_submit, t_ready, observations),
    )


def _stage_times(
    t_submit: float, t_ready: float, observations: list[tuple[float, str]]
) -> dict[str, float]:
    """Boundary timings per generating stage, from the client's poll record."""
    first_seen: dict[str, float] = {}
    for ts, state in observations:
        first_seen.setdefault(state, ts)
    order = list(_GENERATING) + ["ready"]

    def entered(state: str) -> float:
        # A stage the polls skipped is charged zero: it begins when the
        # next observed stage does.
        index = order.index(state)
        for later in order[index:]:
            if later in first_seen:
                return first_seen[later]
        return t_ready

    times = {}
    for stage, next_stage in zip(order, order[1:]):
        times[stage] = max(0.0, entered(next_stage) - entered(stage))
    times["total"] = max(0.0, t_ready - t_submit)
    return times


def _quantile(values: list[float], q: float) -> float:
    """Nearest-rank quantile; q in (0, 100]."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100 * len(ordered)))
    return ordered[rank - 1]


@dataclass
class RunReport:
    sessions_attempted: int
    sessions_completed: int
    sessions_failed: int
    wall_time_s: float
    stages: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "sessions_attempted": self.sessions_attempted,
            "sessions_completed": self.sessions_completed,
            "sessions_failed": self.sessions_failed,
            "wall_time_s": round(self.wall_time_s, 3),
            "stages": self.stages,
        }


def run_load(
    base_url: str,
    sessions: int,
    concurrency: int,
    seed: int | None = None,
    busy_deadline_s: float = 120.0,
    outcomes_sink: dict[int, AskOutcome] | None = None,
) -> RunReport:
    """Drive N complete sessions with at most C in flight.

    ``outcomes_sink``, when given, collects each per-session outcome keyed
    by its zero-based session index.
    """
    started = time.monotonic()
    outcomes: list[AskOutcome] = []
    outcome_lock = threading.Lock()

    def worker(index: int) -> None:
        client = HallClient(base_url, busy_deadline_s=busy_deadline_s)
        try:
            wav = build_fixture_wav(
                f"load-{index}", text=f"What does visitor {index} ask of the oracle?"
            )
            outcome = drive_session(client, wav, None if seed is None else seed + index)
        except TransportError as exc:
            outcome = AskOutcome(session_id="", completed=False, failure=str(exc))
        finally:
            client.close()
        with outcome_lock:
            outcomes.append(outcome)
            if outcomes_sink is not None:
                outcomes_sink[index] = outcome

    with concurrent.futures.ThreadPoolExecutor(max_workers=concurrency) as pool:
        list(pool.map(worker, range(sessions)))

    completed = [o for o in outcomes if o.completed]
    stages = {}
    for key in _STAGE_KEYS:
        samples = [o.stage_times.get(key, 0.0) for o in completed]
        stages[key] = {
            "p50_s": round(_quantile(samples, 50), 4),
            "p95_s": round(_quantile(samples, 95), 4),
        }
    return RunReport(
        sessions_attempted=sessions,
        sessions_completed=len(completed),
        sessions_failed=len(outcomes) - len(completed),
        wall_time_s=time.monotonic() - started,
        stages=stages,
    )


# -- commands -------------------------------------------------------------


def _fail(message: str, exit_code: int) -> None:
    click.echo(f"hallctl: {message}", err=True)
    sys.exit(exit_code)


def _resolve_server(ctx_server: str | None, embedded: bool, config_path: str | None):
    """Returns (context manager yielding base_url)."""
    if embedded:
        return embedded_server(load_config(config_path))
    if not ctx_server:
        _fail("pass --server URL or --embedded", 2)
    return contextlib.nullcontext(ctx_server)


@click.group()
def main():
    """Client for the prophecy generation service."""


@main.command()
@click.option("--server", help="Base URL of a running service.")
@click.option("--embedded", is_flag=True, help="Run an in-process server instead.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--fixture", "fixture_key", help="Fixture key to synthesize audio for.")
@click.option("--file", "wav_path", type=click.Path(exists=True), help="Existing WAV to upload.")
@click.option("--seed", type=int, default=None, help="Pipeline seed for reproducible output.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Frame archive destination.")
def ask(server, embedded, config_path, fixture_key, wav_path, seed, out_path):
    """Run one full visitor session and print the prophecy."""
    if not fixture_key and not wav_path:
        _fail("pass --fixture KEY or --file WAV", 2)
    if wav_path:
        wav = Path(wav_path).read_bytes()
    else:
        wav = build_fixture_wav(fixture_key)
    try:
        with _resolve_server(server, embedded, config_path) as base_url:
            client = HallClient(base_url)
            try:
                destination = Path(out_path) if out_path else None
                outcome = drive_session(client, wav, seed, out_path=destination)
            finally:
                client.close()
    except (TransportError, OSError) as exc:
        _fail(str(exc), 2)
    if not outcome.completed:
        _fail(f"session {outcome.session_id} failed ({outcome.failure})", 1)
    click.echo(outcome.prophecy_text)
    summary = {
        "session_id": outcome.session_id,
        "digest": outcome.digest,
        "digest_verified": outcome.digest_ok,
    }
    if out_path:
        summary["archive_file"] = str(out_path)
    click.echo(json.dumps(summary), err=True)
    if not outcome.digest_ok:
        _fail("downloaded archive does not match its digest", 1)


@main.command()
@click.option("--server", help="Base URL of a running service.")
@click.option("--embedded", is_flag=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--sessions", type=int, required=True)
@click.option("--concurrency", type=int, required=True)
@click.option("--seed", type=int, default=None)
def load(server, embedded, config_path, sessions, concurrency, seed):
    """Run many full sessions and print a latency report as JSON."""
    if sessions < 1 or concurrency < 1:
        _fail("--sessions and --concurrency must be >= 1", 2)
    try:
        with _resolve_server(server, embedded, config_path) as base_url:
            report = run_load(base_url, sessions, concurrency, seed)
    except TransportError as exc:
        _fail(str(exc), 2)
    click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if report.sessions_failed:
        sys.exit(1)


@main.command()
@click.option("--key", required=True, help="Fixture key to embed.")
@click.option("--text", default=None, help="Inline transcript (otherwise key lookup).")
@click.option("--lang", default="en", help="Source language tag for inline text.")
@click.option("--duration", type=float, default=1.0, help="Clip length in seconds.")
@click.option("--rate", type=int, default=16000, help="Sample rate in Hz.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def fixture(key, text, lang, duration, rate, out_path):
    """Write a fixture WAV that the mock transcriber understands."""
    try:
        wav = build_fixture_wav(
            key, text=text, lang=lang, duration_s=duration, sample_rate_hz=rate
        )
        destination = Path(out_path) if out_path else Path(f"{key}.wav")
        destination.write_bytes(wav)
    except (ValueError, OSError) as exc:
        _fail(str(exc), 2)
    click.echo(str(destination))


@main.group()
def archive():
    """Inspect the prophecy archive."""


@archive.command("ls")
@click.option("--server", required=True, help="Base URL of a running service.")
@click.option("--limit", type=int, default=50)
def archive_ls(server, limit):
    """List archive entries: id, timestamp, start of the prophecy."""
    client = HallClient(server)
    try:
        page = client.archive_page(limit=limit)
    except TransportError as exc:
        _fail(str(exc), 2)
    finally:
        client.close()
    for entry in page["entries"]:
        text = entry["prophecy_text"][:60]
        click.echo(f"{entry['id']}  {entry['created_at']}  {text}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Run the service in the foreground."""
    config = load_config(config_path)
    state = create_state(config)
    app = create_app(state)
    uvicorn.run(app, host=host or config.host, port=port if port is not None else config.port)


if __name__ == "__main__":
    main()

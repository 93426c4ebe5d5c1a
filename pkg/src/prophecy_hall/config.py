"""Service configuration: one JSON file plus HALL_* env-var overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backends.base import BackendDescriptor, BackendKind
from .orchestrator import EtaModel


@dataclass(frozen=True)
class VideoDefaults:
    duration_s: float = 30.0
    fps: int = 10
    width: int = 256
    height: int = 256
    # Wall seconds of fake latency per second of output; 4.0 reproduces the
    # production pace (a 30 s video takes 2 minutes), 0 keeps tests fast.
    simulated_rate: float = 0.0


def _mock(backend_id: str) -> BackendDescriptor:
    return BackendDescriptor(backend_id=backend_id, kind=BackendKind.MOCK)


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8400
    data_dir: Path = Path("./hall-data")
    template_path: Path | None = None
    capacity: int = 256
    idle_timeout_s: float = 1800.0
    # Every completed session is archived by default; flip off to honor
    # venues that do not want visitor prophecies retained.
    archive_enabled: bool = True
    video_concurrency: int = 2
    pipeline_workers: int = 8
    snapshot_every: int = 256
    eta: EtaModel = field(default_factory=EtaModel)
    video: VideoDefaults = field(default_factory=VideoDefaults)
    transcriber: BackendDescriptor = field(default_factory=lambda: _mock("mock-transcribe"))
    text_generator: BackendDescriptor = field(default_factory=lambda: _mock("mock-textgen"))
    video_renderer: BackendDescriptor = field(default_factory=lambda: _mock("mock-render"))
    remote_timeout_s: float = 120.0
    ui_dir: Path | None = None


def _config_from_dict(data: dict) -> ServiceConfig:
    config = ServiceConfig()
    updates: dict = {}
    for key in (
        "host", "port", "capacity", "idle_timeout_s", "archive_enabled",
        "video_concurrency", "pipeline_workers", "snapshot_every",
        "remote_timeout_s",
    ):
        if key in data:
            updates[key] = data[key]
    for key in ("data_dir", "template_path", "ui_dir"):
        if key in data and data[key] is not None:
            updates[key] = Path(data[key])
    if "eta" in data:
        updates["eta"] = EtaModel(**data["eta"])
    if "video" in data:
        updates["video"] = VideoDefaults(**data["video"])
    for key in ("transcriber", "text_generator", "video_renderer"):
        if key in data:
            updates[key] = BackendDescriptor.from_dict(data[key])
    return replace(config, **updates)


def _apply_env(config: ServiceConfig, env: dict[str, str]) -> ServiceConfig:
    updates: dict = {}
    if "HALL_HOST" in env:
        updates["host"] = env["HALL_HOST"]
    if "HALL_PORT" in env:
        updates["port"] = int(env["HALL_PORT"])
    if "HALL_DATA_DIR" in env:
        updates["data_dir"] = Path(env["HALL_DATA_DIR"])
    if "HALL_TEMPLATE_PATH" in env:
        updates["template_path"] = Path(env["HALL_TEMPLATE_PATH"])
    if "HALL_CAPACITY" in env:
        updates["capacity"] = int(env["HALL_CAPACITY"])
    if "HALL_IDLE_TIMEOUT_S" in env:
        updates["idle_timeout_s"] = float(env["HALL_IDLE_TIMEOUT_S"])
    if "HALL_VIDEO_CONCURRENCY" in env:
        updates["video_concurrency"] = int(env["HALL_VIDEO_CONCURRENCY"])
    if "HALL_VIDEO_DURATION_S" in env or "HALL_VIDEO_FPS" in env or "HALL_SIMULATED_RATE" in env:
        video = config.video
        if "HALL_VIDEO_DURATION_S" in env:
            video = replace(video, duration_s=float(env["HALL_VIDEO_DURATION_S"]))
        if "HALL_VIDEO_FPS" in env:
            video = replace(video, fps=int(env["HALL_VIDEO_FPS"]))
        if "HALL_SIMULATED_RATE" in env:
            video = replace(video, simulated_rate=float(env["HALL_SIMULATED_RATE"]))
        updates["video"] = video
    if "HALL_UI_DIR" in env:
        updates["ui_dir"] = Path(env["HALL_UI_DIR"])
    return replace(config, **updates) if updates else config


def load_config(path: Path | str | None = None, env: dict[str, str] | None = None) -> ServiceConfig:
    """Load configuration; env overrides file, file overrides defaults."""
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must contain a JSON object")
        config = _config_from_dict(data)
    else:
        config = ServiceConfig()
    return _apply_env(config, os.environ if env is None else env)

"""Service configuration: a key=value file plus EP_* environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_PORT = 7861


@dataclass
class ServiceConfig:
    data_dir: Path = Path("data")
    port: int = DEFAULT_PORT
    backend: str = "mock"
    workers: int = 2
    api_token: str = ""
    ui_dir: Path | None = None
    adapters: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= self.port <= 65535:
            raise ValueError("port out of range")


def _parse_file(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | Path | None = None,
                env: dict[str, str] | None = None) -> ServiceConfig:
    """File values first, then EP_DATA_DIR / EP_PORT / EP_BACKEND / EP_WORKERS
    / EP_API_TOKEN override them."""
    env = os.environ if env is None else env
    values: dict[str, str] = {}
    if path is not None:
        values.update(_parse_file(Path(path)))

    adapters = {
        key[len("adapter."):]: v
        for key, v in values.items()
        if key.startswith("adapter.")
    }

    def pick(file_key: str, env_key: str, default: str) -> str:
        return env.get(env_key) or values.get(file_key) or default

    ui_dir = pick("ui_dir", "EP_UI_DIR", "")
    return ServiceConfig(
        data_dir=Path(pick("data_dir", "EP_DATA_DIR", "data")),
        port=int(pick("port", "EP_PORT", str(DEFAULT_PORT))),
        backend=pick("backend", "EP_BACKEND", "mock"),
        workers=int(pick("workers", "EP_WORKERS", "2")),
        api_token=pick("api_token", "EP_API_TOKEN", ""),
        ui_dir=Path(ui_dir) if ui_dir else None,
        adapters=adapters,
    )

"""Bundled template portraits used for training validation and as the
default generation templates."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..geometry import Image
from ..pngio import decode_image


def template_dir() -> Path:
    return Path(resources.files(__package__) / "templates")


def list_template_names() -> list[str]:
    return sorted(p.name for p in template_dir().glob("*.png"))


def load_template(name: str) -> Image:
    return decode_image((template_dir() / name).read_bytes())


def load_all_templates() -> list[Image]:
    return [load_template(n) for n in list_template_names()]

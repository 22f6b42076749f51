"""PNG/JPEG decode and PNG encode helpers.

The float <-> 8-bit conversion is value/255 exactly, so a PNG round trip
of any image produced by this package is bit-stable.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import UndecodableImage
from .geometry import Image


def decode_image(data: bytes) -> Image:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UndecodableImage(str(exc)) from exc
    return Image.from_uint8(arr)


def encode_png(img: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(img.to_uint8(), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_image(path: str | Path) -> Image:
    return decode_image(Path(path).read_bytes())


def save_png(img: Image, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))

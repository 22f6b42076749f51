"""Shared builders for deterministic fiducial test inputs."""

from __future__ import annotations

import numpy as np

from portraitforge import fiducial
from portraitforge.geometry import BBox, Image


def textured_background(h: int, w: int, seed: int) -> Image:
    """Deterministic non-uniform background clear of the reserved colors."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    base = 0.25 + 0.3 * (ys / max(h - 1, 1)) * (xs / max(w - 1, 1))
    data = np.stack([base, base * 0.9, base * 1.05], axis=-1)
    for _ in range(4):
        y0 = int(rng.integers(0, h - 8))
        x0 = int(rng.integers(0, w - 8))
        shade = float(rng.uniform(0.05, 0.45))
        data[y0:y0 + 8, x0:x0 + 8, :] = shade
    return Image(np.clip(data, 0.0, 1.0).astype(np.float32))


def user_photo(seed: int, h: int = 220, w: int = 200,
               bbox: BBox | None = None) -> tuple[Image, BBox]:
    """One synthetic user photo: textured background plus a fiducial face."""
    rng = np.random.default_rng(seed + 1000)
    if bbox is None:
        fh = int(rng.integers(70, 110))
        fw = int(rng.integers(60, 90))
        x0 = int(rng.integers(10, w - fw - 10))
        y0 = int(rng.integers(10, h - fh - 10))
        bbox = BBox(x0, y0, x0 + fw, y0 + fh)
    img = textured_background(h, w, seed)
    fiducial.paint_face(img, bbox)
    return img, bbox


def user_photo_set(user_seed: int, count: int = 5) -> list[Image]:
    return [user_photo(user_seed * 100 + i)[0] for i in range(count)]


def make_bundle(user_id: str, seed: int = 0):
    """A UserBundle with a pristine fiducial face_id (no training run)."""
    from portraitforge.adapters import detect_faces
    from portraitforge.lora import merge_lora
    from portraitforge.runs import UserBundle
    from portraitforge.training import TrainingConfig, train_lora

    face_id, _ = user_photo(seed + 500, h=256, w=224)
    roop, _ = user_photo(seed + 900, h=240, w=210)
    det = detect_faces(face_id)[0]
    ckpts = train_lora([Image.full(8, 8, 0.5)],
                       TrainingConfig(user_id=user_id, allow_any_count=True))
    merged = merge_lora(ckpts, [1.0] * len(ckpts))
    return UserBundle(
        user_id=user_id,
        merged=merged,
        face_id=face_id,
        face_id_landmarks=det.landmarks,
        face_id_bbox=det.bbox,
        roop=roop,
    )

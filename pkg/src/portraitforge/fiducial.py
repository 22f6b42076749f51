"""Synthetic fiducial faces: the model-free test path through the system.

A fiducial face is a filled rectangle of reserved colors: a skin-tone
fill, a 3 px border ring, and one 3x3 marker block per canonical
landmark at fixed fractional positions. The reference detector scans for
these colors, which gives painter -> detector an exact round trip on
pristine images and keeps working (within a couple of pixels) after
crops and bilinear resizes. Honest inpainting destroys the markers, so
generated regions never re-detect as fiducial faces.
"""

from __future__ import annotations

import numpy as np

from .geometry import BBox, Image, LandmarkSet

# reserved 8-bit colors; keep mutually distant in max-norm
FACE_FILL = (205, 170, 145)
FACE_BORDER = (0, 200, 200)
MARKER_COLORS = (
    (220, 40, 40),    # left eye
    (40, 220, 40),    # right eye
    (40, 40, 220),    # nose tip
    (220, 40, 220),   # mouth left
    (220, 220, 40),   # mouth right
)

# canonical landmark positions as (x, y) fractions of the face rectangle
LANDMARK_FRACTIONS = (
    (0.30, 0.38),
    (0.70, 0.38),
    (0.50, 0.58),
    (0.35, 0.76),
    (0.65, 0.76),
)

BORDER_THICKNESS = 3
MARKER_HALF = 1  # markers are 3x3 blocks

# pixels within this L-inf distance of a reserved color count as that color
MATCH_TOLERANCE = 12 / 255.0


def _f(color: tuple[int, int, int]) -> np.ndarray:
    return np.array(color, dtype=np.float32) / np.float32(255.0)


def landmark_positions(bbox: BBox) -> np.ndarray:
    """Integer pixel positions of the five markers for a face rectangle."""
    out = np.zeros((5, 2), dtype=np.float64)
    for i, (fx, fy) in enumerate(LANDMARK_FRACTIONS):
        out[i, 0] = round(bbox.x0 + fx * bbox.width)
        out[i, 1] = round(bbox.y0 + fy * bbox.height)
    return out


def paint_face(canvas: Image, bbox: BBox) -> LandmarkSet:
    """Paint a fiducial face onto a copy-free canvas; returns painted landmarks.

    The canvas array is modified in place (Image wraps the same buffer).
    Coordinates are rounded to integers; the rectangle is clipped to the
    canvas.
    """
    data = canvas.data
    h, w = canvas.h, canvas.w
    x0, y0 = int(round(bbox.x0)), int(round(bbox.y0))
    x1, y1 = int(round(bbox.x1)), int(round(bbox.y1))

    cx0, cy0 = max(0, x0), max(0, y0)
    cx1, cy1 = min(w, x1), min(h, y1)
    if cx0 >= cx1 or cy0 >= cy1:
        raise ValueError("face rectangle lies outside the canvas")

    data[cy0:cy1, cx0:cx1] = _f(FACE_FILL)

    t = BORDER_THICKNESS
    border = np.zeros((h, w), dtype=bool)
    border[cy0:cy1, cx0:cx1] = True
    ix0, iy0 = max(0, x0 + t), max(0, y0 + t)
    ix1, iy1 = min(w, x1 - t), min(h, y1 - t)
    if ix0 < ix1 and iy0 < iy1:
        border[iy0:iy1, ix0:ix1] = False
    data[border] = _f(FACE_BORDER)

    marks = landmark_positions(BBox(x0, y0, x1, y1))
    for idx, (mx, my) in enumerate(marks):
        mx, my = int(mx), int(my)
        bx0, by0 = max(0, mx - MARKER_HALF), max(0, my - MARKER_HALF)
        bx1, by1 = min(w, mx + MARKER_HALF + 1), min(h, my + MARKER_HALF + 1)
        data[by0:by1, bx0:bx1] = _f(MARKER_COLORS[idx])
    return LandmarkSet.from_array(marks)


def color_matches(data: np.ndarray, color: tuple[int, int, int]) -> np.ndarray:
    """Boolean mask of pixels within MATCH_TOLERANCE of the reserved color."""
    diff = np.abs(data.astype(np.float32) - _f(color)[None, None, :])
    return diff.max(axis=2) <= MATCH_TOLERANCE


def material_mask(data: np.ndarray) -> np.ndarray:
    """Pixels belonging to any fiducial color (fill, border or markers)."""
    out = color_matches(data, FACE_FILL) | color_matches(data, FACE_BORDER)
    for color in MARKER_COLORS:
        out |= color_matches(data, color)
    return out


def make_portrait(h: int, w: int, bbox: BBox, background: float = 0.15,
                  vignette: bool = True) -> tuple[Image, LandmarkSet]:
    """A neutral portrait: gently shaded background plus one fiducial face."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    shade = background + 0.12 * (ys / max(h - 1, 1))
    if vignette:
        shade = shade + 0.05 * (xs / max(w - 1, 1))
    canvas = Image(np.clip(np.stack([shade, shade, shade * 1.1], axis=-1), 0.0, 1.0))
    landmarks = paint_face(canvas, bbox)
    return canvas, landmarks

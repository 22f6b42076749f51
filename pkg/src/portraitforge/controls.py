"""Guidance-reference builders for the four control kinds.

Each builder is deterministic and dimension-preserving. The edge map is
thresholded Sobel magnitude rather than full Canny with hysteresis;
external backends may substitute a true Canny through the same unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Image, LandmarkSet, resize_bilinear

CONTROL_KINDS = ("canny", "color", "openpose", "tile")

EDGE_THRESHOLD = 0.2

# per-landmark-index disc colors, radius 4 px (documented in the README)
OPENPOSE_COLORS = (
    (255, 0, 0),
    (255, 85, 0),
    (255, 170, 0),
    (255, 255, 0),
    (170, 255, 0),
)
OPENPOSE_RADIUS = 4


@dataclass(frozen=True, eq=False)
class ControlUnit:
    kind: str
    reference: Image
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in CONTROL_KINDS:
            raise ValueError(f"unknown control kind {self.kind!r}")
        if not 0.0 <= self.weight <= 2.0:
            raise ValueError("control weight must be in [0, 2]")


def _gray(img: Image) -> np.ndarray:
    return img.data.astype(np.float64).mean(axis=2)


def canny_reference(img: Image, threshold: float = EDGE_THRESHOLD) -> Image:
    """Binary edge map: normalized Sobel magnitude thresholded."""
    g = np.pad(_gray(img), 1, mode="edge")
    right = g[:-2, 2:] + 2.0 * g[1:-1, 2:] + g[2:, 2:]
    left = g[:-2, :-2] + 2.0 * g[1:-1, :-2] + g[2:, :-2]
    bottom = g[2:, :-2] + 2.0 * g[2:, 1:-1] + g[2:, 2:]
    top = g[:-2, :-2] + 2.0 * g[:-2, 1:-1] + g[:-2, 2:]
    gx = right - left
    gy = bottom - top
    mag = np.hypot(gx, gy)
    mag = mag / max(float(mag.max()), 1e-9)
    edges = (mag > threshold).astype(np.float32)
    return Image(np.repeat(edges[:, :, None], 3, axis=2))


def color_reference(img: Image, grid: int = 8) -> Image:
    """Low-frequency color carrier: grid x grid block means, nearest upsample."""
    if grid < 1:
        raise ValueError("grid must be >= 1")
    h, w = img.h, img.w
    data = img.data.astype(np.float64)
    cells = np.zeros((grid, grid, 3), dtype=np.float64)
    for i in range(grid):
        ys = i * h // grid
        ye = min(h, max(ys + 1, (i + 1) * h // grid))
        for j in range(grid):
            xs = j * w // grid
            xe = min(w, max(xs + 1, (j + 1) * w // grid))
            cells[i, j] = data[ys:ye, xs:xe].reshape(-1, 3).mean(axis=0)
    iy = np.minimum((np.arange(h) * grid) // h, grid - 1)
    ix = np.minimum((np.arange(w) * grid) // w, grid - 1)
    out = cells[iy[:, None], ix[None, :], :]
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def openpose_reference(landmarks: LandmarkSet, h: int, w: int) -> Image:
    """Black canvas with one fixed-color disc per canonical landmark."""
    data = np.zeros((h, w, 3), dtype=np.float32)
    r2 = OPENPOSE_RADIUS * OPENPOSE_RADIUS
    for idx, p in enumerate(landmarks):
        color = np.array(OPENPOSE_COLORS[idx % len(OPENPOSE_COLORS)],
                         dtype=np.float32) / np.float32(255.0)
        cx, cy = p.x, p.y
        x_lo = max(0, int(np.floor(cx - OPENPOSE_RADIUS)))
        x_hi = min(w - 1, int(np.ceil(cx + OPENPOSE_RADIUS)))
        y_lo = max(0, int(np.floor(cy - OPENPOSE_RADIUS)))
        y_hi = min(h - 1, int(np.ceil(cy + OPENPOSE_RADIUS)))
        for y in range(y_lo, y_hi + 1):
            for x in range(x_lo, x_hi + 1):
                if (x - cx) ** 2 + (y - cy) ** 2 <= r2:
                    data[y, x] = color
    return Image(data)


def _halve_area(data: np.ndarray) -> np.ndarray:
    """Area-average 2x downscale with ceil-div output dims (odd edges kept)."""
    h, w = data.shape[0], data.shape[1]
    oh, ow = (h + 1) // 2, (w + 1) // 2
    out = np.zeros((oh, ow, data.shape[2]), dtype=np.float64)
    ev = data[0::2]
    od = data[1::2]
    pairs_h = od.shape[0]
    rows = np.zeros((oh, w, data.shape[2]), dtype=np.float64)
    rows[:pairs_h] = (ev[:pairs_h] + od) / 2.0
    if oh > pairs_h:
        rows[pairs_h:] = ev[pairs_h:]
    ev = rows[:, 0::2]
    od = rows[:, 1::2]
    pairs_w = od.shape[1]
    out[:, :pairs_w] = (ev[:, :pairs_w] + od) / 2.0
    if ow > pairs_w:
        out[:, pairs_w:] = ev[:, pairs_w:]
    return out


def tile_reference(img: Image) -> Image:
    """Low-frequency detail carrier: halve with area averaging, upscale back."""
    small = np.clip(_halve_area(img.data.astype(np.float64)), 0.0, 1.0)
    return resize_bilinear(Image(small.astype(np.float32)), img.h, img.w)

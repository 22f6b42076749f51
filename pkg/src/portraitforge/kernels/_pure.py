"""Pure numpy implementations of the per-pixel kernels.

These are the reference semantics; the compiled core in ``_core.pyx``
mirrors every floating-point operation in the same order so both
backends return bit-identical arrays. Keep the two files in sync.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def warp_bilinear(img: np.ndarray, inv: np.ndarray, out_h: int, out_w: int,
                  clamp_border: bool = False) -> np.ndarray:
    """Sample ``img`` at inv-mapped output coordinates with bilinear weights.

    ``inv`` maps output (x, y, 1) to source coordinates. Out-of-range
    samples read 0 unless ``clamp_border``, which replicates edges
    (used for plain resizes).
    """
    img = np.ascontiguousarray(img, dtype=np.float32)
    h, w = img.shape[0], img.shape[1]
    flat = img.reshape(h, w, -1).astype(np.float64)

    xs = np.arange(out_w, dtype=np.float64)[None, :]
    ys = np.arange(out_h, dtype=np.float64)[:, None]
    a00, a01, a02 = float(inv[0, 0]), float(inv[0, 1]), float(inv[0, 2])
    a10, a11, a12 = float(inv[1, 0]), float(inv[1, 1]), float(inv[1, 2])
    sx = a00 * xs + a01 * ys + a02
    sy = a10 * xs + a11 * ys + a12

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    def fetch(yy, xx):
        if clamp_border:
            yc = np.clip(yy, 0, h - 1)
            xc = np.clip(xx, 0, w - 1)
            return flat[yc, xc, :]
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        vals = flat[yc, xc, :]
        vals[~inside] = 0.0
        return vals

    p00 = fetch(y0i, x0i)
    p01 = fetch(y0i, x0i + 1)
    p10 = fetch(y0i + 1, x0i)
    p11 = fetch(y0i + 1, x0i + 1)

    fx3 = fx[:, :, None]
    fy3 = fy[:, :, None]
    top = (1.0 - fx3) * p00 + fx3 * p01
    bot = (1.0 - fx3) * p10 + fx3 * p11
    out = (1.0 - fy3) * top + fy3 * bot
    out32 = out.astype(np.float32)
    if img.ndim == 2:
        return out32.reshape(out_h, out_w)
    return out32.reshape(out_h, out_w, img.shape[2])


def box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window intersected with the image.

    Border windows renormalize over the in-bounds pixel count, so a
    constant image is a fixed point at any radius.
    """
    if radius <= 0:
        return np.ascontiguousarray(img, dtype=np.float32)
    img = np.ascontiguousarray(img, dtype=np.float32)
    squeeze = img.ndim == 2
    data = img.reshape(img.shape[0], img.shape[1], -1)
    h, w, c = data.shape

    i = np.arange(h)
    j = np.arange(w)
    y0 = np.maximum(i - radius, 0)
    y1 = np.minimum(i + radius, h - 1)
    x0 = np.maximum(j - radius, 0)
    x1 = np.minimum(j + radius, w - 1)
    counts = ((y1 - y0 + 1)[:, None] * (x1 - x0 + 1)[None, :]).astype(np.float64)

    out = np.empty((h, w, c), dtype=np.float32)
    for ch in range(c):
        sat = np.zeros((h + 1, w + 1), dtype=np.float64)
        sat[1:, 1:] = np.cumsum(np.cumsum(data[:, :, ch].astype(np.float64), axis=0), axis=1)
        a = sat[np.ix_(y1 + 1, x1 + 1)]
        b = sat[np.ix_(y0, x1 + 1)]
        cc = sat[np.ix_(y1 + 1, x0)]
        d = sat[np.ix_(y0, x0)]
        total = ((a - b) - cc) + d
        out[:, :, ch] = (total / counts).astype(np.float32)
    if squeeze:
        return out.reshape(h, w)
    return out


def disc_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a Euclidean disc: dy*dy + dx*dx <= r*r."""
    m = np.ascontiguousarray(mask).astype(bool)
    if radius <= 0:
        return m.copy()
    h, w = m.shape
    r = int(radius)
    cap = r + 1
    # per-row distance to nearest set pixel along x, capped at r+1
    d = np.full((h, w), cap, dtype=np.int64)
    d[:, 0] = np.where(m[:, 0], 0, cap)
    for j in range(1, w):
        d[:, j] = np.where(m[:, j], 0, np.minimum(cap, d[:, j - 1] + 1))
    for j in range(w - 2, -1, -1):
        d[:, j] = np.minimum(d[:, j], np.minimum(cap, d[:, j + 1] + 1))

    r2 = r * r
    out = np.zeros((h, w), dtype=bool)
    for dy in range(-r, r + 1):
        lo = max(0, -dy)
        hi = min(h, h - dy)
        if lo >= hi:
            continue
        rows = d[lo + dy:hi + dy, :]
        out[lo:hi, :] |= rows * rows + dy * dy <= r2
    return out


def noise_field(seed: int, h: int, w: int, channels: int = 3) -> np.ndarray:
    """Per-(x, y, channel) hash noise in [-1, 1), float64, bit-stable."""
    xs = (np.arange(w, dtype=np.uint64) * np.uint64(73856093))[None, :, None]
    ys = (np.arange(h, dtype=np.uint64) * np.uint64(19349663))[:, None, None]
    cs = (np.arange(channels, dtype=np.uint64) * np.uint64(83492791))[None, None, :]
    key = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ xs ^ ys ^ cs
    with np.errstate(over="ignore"):
        z = key + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) / 4503599627370496.0 - 1.0

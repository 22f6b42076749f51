# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-pixel kernels.

Mirrors ``_pure.py`` operation for operation; both backends must return
bit-identical arrays (the equivalence suite enforces this). Floating
point expressions keep the same association order as the numpy code and
the extension is built with contraction disabled, so do not "simplify"
arithmetic here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

BACKEND = "compiled"

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t pf_splitmix64(uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }
    """
    cnp.uint64_t pf_splitmix64(cnp.uint64_t x) nogil


cdef inline double _sample(const float[:, :, ::1] src, int h, int w,
                           int yy, int xx, int ch, bint clamp_border) nogil:
    if clamp_border:
        if yy < 0:
            yy = 0
        elif yy > h - 1:
            yy = h - 1
        if xx < 0:
            xx = 0
        elif xx > w - 1:
            xx = w - 1
        return <double>src[yy, xx, ch]
    if yy < 0 or yy >= h or xx < 0 or xx >= w:
        return 0.0
    return <double>src[yy, xx, ch]


def warp_bilinear(img, inv, int out_h, int out_w, bint clamp_border=False):
    img32 = np.ascontiguousarray(img, dtype=np.float32)
    cdef bint squeeze = img32.ndim == 2
    src_arr = img32.reshape(img32.shape[0], img32.shape[1], -1)
    cdef const float[:, :, ::1] src = src_arr
    cdef int h = src.shape[0]
    cdef int w = src.shape[1]
    cdef int c = src.shape[2]
    cdef double a00 = inv[0, 0], a01 = inv[0, 1], a02 = inv[0, 2]
    cdef double a10 = inv[1, 0], a11 = inv[1, 1], a12 = inv[1, 2]
    out_arr = np.empty((out_h, out_w, c), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef int i, j, ch, x0, y0, x1, y1
    cdef double x, y, sx, sy, fx, fy
    cdef double p00, p01, p10, p11, top, bot
    with nogil:
        for i in range(out_h):
            y = <double>i
            for j in range(out_w):
                x = <double>j
                sx = a00 * x + a01 * y + a02
                sy = a10 * x + a11 * y + a12
                fx = sx - floor(sx)
                fy = sy - floor(sy)
                x0 = <int>floor(sx)
                y0 = <int>floor(sy)
                x1 = x0 + 1
                y1 = y0 + 1
                for ch in range(c):
                    p00 = _sample(src, h, w, y0, x0, ch, clamp_border)
                    p01 = _sample(src, h, w, y0, x1, ch, clamp_border)
                    p10 = _sample(src, h, w, y1, x0, ch, clamp_border)
                    p11 = _sample(src, h, w, y1, x1, ch, clamp_border)
                    top = (1.0 - fx) * p00 + fx * p01
                    bot = (1.0 - fx) * p10 + fx * p11
                    out[i, j, ch] = <float>((1.0 - fy) * top + fy * bot)
    if squeeze:
        return out_arr.reshape(out_h, out_w)
    return out_arr


def box_blur(img, int radius):
    if radius <= 0:
        return np.ascontiguousarray(img, dtype=np.float32)
    img32 = np.ascontiguousarray(img, dtype=np.float32)
    cdef bint squeeze = img32.ndim == 2
    data_arr = img32.reshape(img32.shape[0], img32.shape[1], -1)
    cdef const float[:, :, ::1] data = data_arr
    cdef int h = data.shape[0]
    cdef int w = data.shape[1]
    cdef int c = data.shape[2]
    sat_arr = np.zeros((h + 1, w + 1), dtype=np.float64)
    cdef double[:, ::1] sat = sat_arr
    out_arr = np.empty((h, w, c), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef int i, j, ch, y0, y1, x0, x1
    cdef double total, count
    for ch in range(c):
        with nogil:
            # two passes matching np.cumsum(axis=0) then np.cumsum(axis=1)
            for j in range(w):
                sat[1, j + 1] = <double>data[0, j, ch]
            for i in range(1, h):
                for j in range(w):
                    sat[i + 1, j + 1] = <double>data[i, j, ch] + sat[i, j + 1]
            for i in range(1, h + 1):
                for j in range(2, w + 1):
                    sat[i, j] = sat[i, j] + sat[i, j - 1]
            for i in range(h):
                y0 = i - radius
                if y0 < 0:
                    y0 = 0
                y1 = i + radius
                if y1 > h - 1:
                    y1 = h - 1
                for j in range(w):
                    x0 = j - radius
                    if x0 < 0:
                        x0 = 0
                    x1 = j + radius
                    if x1 > w - 1:
                        x1 = w - 1
                    total = ((sat[y1 + 1, x1 + 1] - sat[y0, x1 + 1]) - sat[y1 + 1, x0]) + sat[y0, x0]
                    count = <double>((y1 - y0 + 1) * (x1 - x0 + 1))
                    out[i, j, ch] = <float>(total / count)
    if squeeze:
        return out_arr.reshape(h, w)
    return out_arr


def disc_dilate(mask, int radius):
    m8 = np.ascontiguousarray(mask).astype(bool)
    if radius <= 0:
        return m8.copy()
    m_arr = m8.view(np.uint8)
    cdef const cnp.uint8_t[:, ::1] m = m_arr
    cdef int h = m.shape[0]
    cdef int w = m.shape[1]
    cdef long cap = radius + 1
    cdef long r2 = <long>radius * <long>radius
    d_arr = np.empty((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] d = d_arr
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef int i, j, dy, lo, hi
    cdef long v
    with nogil:
        for i in range(h):
            d[i, 0] = 0 if m[i, 0] else cap
            for j in range(1, w):
                if m[i, j]:
                    d[i, j] = 0
                else:
                    v = d[i, j - 1] + 1
                    d[i, j] = v if v < cap else cap
            for j in range(w - 2, -1, -1):
                v = d[i, j + 1] + 1
                if v > cap:
                    v = cap
                if v < d[i, j]:
                    d[i, j] = v
        for dy in range(-radius, radius + 1):
            lo = 0 if -dy < 0 else -dy
            hi = h if h - dy > h else h - dy
            for i in range(lo, hi):
                for j in range(w):
                    v = d[i + dy, j]
                    if v * v + <long>dy * <long>dy <= r2:
                        out[i, j] = 1
    return out_arr.view(bool)


def noise_field(seed, int h, int w, int channels=3):
    cdef cnp.uint64_t s = <cnp.uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    out_arr = np.empty((h, w, channels), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef int i, j, ch
    cdef cnp.uint64_t key, z
    with nogil:
        for i in range(h):
            for j in range(w):
                for ch in range(channels):
                    key = s ^ (<cnp.uint64_t>j * 73856093ULL) \
                            ^ (<cnp.uint64_t>i * 19349663ULL) \
                            ^ (<cnp.uint64_t>ch * 83492791ULL)
                    z = pf_splitmix64(key)
                    out[i, j, ch] = <double>(z >> 11) / 4503599627370496.0 - 1.0
    return out_arr

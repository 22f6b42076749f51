"""Pure, deterministic landmark and image math.

Affine estimation, warping, face pasting and the mask calculus used by
both pipelines. Everything here is a pure function of its inputs; masks
are binarized at 0.5 before any morphology, soft values appear only at
blend time.

Coordinate convention: pixel (row i, col j) has center (x=j, y=i), and
rasterization is pixel-center inclusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    CollinearLandmarks,
    DegenerateHull,
    DimensionMismatch,
    LengthMismatch,
    SingularTransform,
)

CANONICAL_LANDMARK_COUNT = 5
# canonical 5-point order: left eye, right eye, nose tip, mouth left, mouth right
LANDMARK_NAMES = ("left_eye", "right_eye", "nose", "mouth_left", "mouth_right")


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("point coordinates must be finite")


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered 2-D keypoints in pixel coordinates. Order is semantic."""

    points: tuple[Point2, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "LandmarkSet":
        return cls(tuple(Point2(float(x), float(y)) for x, y in np.asarray(arr, dtype=np.float64)))

    @property
    def mouth_corners(self) -> tuple[Point2, Point2]:
        if len(self.points) != CANONICAL_LANDMARK_COUNT:
            raise LengthMismatch("mouth corners require the canonical 5-point set")
        return self.points[3], self.points[4]


@dataclass(frozen=True)
class AffineMatrix:
    """2x3 row-major matrix mapping source (x, y, 1) to target (x, y)."""

    m: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.m, dtype=np.float64)
        if arr.shape != (2, 3):
            raise ValueError("affine matrix must be 2x3")
        if not np.all(np.isfinite(arr)):
            raise ValueError("affine matrix entries must be finite")
        object.__setattr__(self, "m", arr)

    @classmethod
    def identity(cls) -> "AffineMatrix":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def det(self) -> float:
        a = self.m
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])

    def inverse(self) -> "AffineMatrix":
        d = self.det()
        if abs(d) <= 1e-12:
            raise SingularTransform(f"linear part is singular (|det|={abs(d):.3e})")
        a = self.m
        inv_lin = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / d
        inv_t = -inv_lin @ a[:, 2]
        return AffineMatrix(np.column_stack([inv_lin, inv_t]))


def _as_float01(data: np.ndarray, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.size and (float(arr.min()) < -1e-6 or float(arr.max()) > 1.0 + 1e-6):
        raise ValueError(f"{what} values must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Image:
    """RGB float image, shape (h, w, 3), values in [0, 1], float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError("image data must have shape (h, w, 3)")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "data", _as_float01(arr, "image"))

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @classmethod
    def full(cls, h: int, w: int, value: float = 0.0) -> "Image":
        return cls(np.full((h, w, 3), value, dtype=np.float32))

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "Image":
        a = np.asarray(arr, dtype=np.uint8)
        if a.ndim == 2:
            a = np.stack([a, a, a], axis=-1)
        return cls(a.astype(np.float32) / np.float32(255.0))

    def to_uint8(self) -> np.ndarray:
        scaled = np.rint(self.data.astype(np.float64) * 255.0)
        return np.clip(scaled, 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Mask:
    """Single-channel soft mask in [0, 1], shape (h, w), float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError("mask data must have shape (h, w)")
        object.__setattr__(self, "data", _as_float01(arr, "mask"))

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    def binary(self) -> np.ndarray:
        """Boolean view thresholded at 0.5 (morphology operates on this)."""
        return self.data >= 0.5

    @classmethod
    def zeros(cls, h: int, w: int) -> "Mask":
        return cls(np.zeros((h, w), dtype=np.float32))

    @classmethod
    def from_bool(cls, arr: np.ndarray) -> "Mask":
        return cls(np.asarray(arr, dtype=bool).astype(np.float32))

    def is_empty(self) -> bool:
        return not bool(self.binary().any())


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("bbox requires x0 < x1 and y0 < y1")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def area(self) -> float:
        return self.width * self.height

    def clamped(self, h: int, w: int) -> "BBox":
        return BBox(
            max(0.0, min(self.x0, w - 1.0)),
            max(0.0, min(self.y0, h - 1.0)),
            max(self.x0 + 1e-9, min(self.x1, float(w))),
            max(self.y0 + 1e-9, min(self.y1, float(h))),
        )


# ---------------------------------------------------------------------------
# affine estimation


def estimate_affine(src: LandmarkSet, dst: LandmarkSet) -> AffineMatrix:
    """Least-squares affine fit of src -> dst via the 3x3 normal equations.

    Raises CollinearLandmarks when the normal matrix is numerically
    singular (reciprocal condition below 1e-10); callers that need a
    degenerate-safe path should use :func:`estimate_alignment`.
    """
    if len(src) != len(dst):
        raise LengthMismatch(f"{len(src)} source vs {len(dst)} target landmarks")
    if len(src) < 3:
        raise LengthMismatch("affine estimation needs at least 3 correspondences")
    s = src.as_array()
    d = dst.as_array()
    a = np.column_stack([s, np.ones(len(s))])  # k x 3
    n = a.T @ a
    sv = np.linalg.svd(n, compute_uv=False)
    if sv[0] <= 0 or sv[-1] / sv[0] < 1e-10:
        raise CollinearLandmarks("source landmarks are collinear or coincident")
    x = np.linalg.solve(n, a.T @ d)  # 3 x 2
    return AffineMatrix(x.T)


def estimate_similarity(src: LandmarkSet, dst: LandmarkSet) -> AffineMatrix:
    """Closed-form scale+rotation+translation fit (orthogonal Procrustes)."""
    if len(src) != len(dst):
        raise LengthMismatch(f"{len(src)} source vs {len(dst)} target landmarks")
    if len(src) < 2:
        raise LengthMismatch("similarity estimation needs at least 2 points")
    s = src.as_array()
    d = dst.as_array()
    mu_s = s.mean(axis=0)
    mu_d = d.mean(axis=0)
    sc = s - mu_s
    dc = d - mu_d
    var_s = float((sc ** 2).sum()) / len(s)
    if var_s <= 1e-18:
        raise CollinearLandmarks("source landmarks are coincident")
    cov = dc.T @ sc / len(s)
    u, sig, vt = np.linalg.svd(cov)
    sign = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[1] = -1.0
    r = u @ np.diag(sign) @ vt
    scale = float((sig * sign).sum()) / var_s
    t = mu_d - scale * (r @ mu_s)
    return AffineMatrix(np.column_stack([scale * r, t]))


def estimate_alignment(src: LandmarkSet, dst: LandmarkSet) -> AffineMatrix:
    """Affine fit with the documented similarity fallback for degenerate layouts."""
    try:
        return estimate_affine(src, dst)
    except CollinearLandmarks:
        return estimate_similarity(src, dst)


def transform_points(m: AffineMatrix, pts: LandmarkSet) -> LandmarkSet:
    arr = pts.as_array()
    lin = m.m[:, :2]
    t = m.m[:, 2]
    out = arr @ lin.T + t
    return LandmarkSet.from_array(out)


# ---------------------------------------------------------------------------
# warping and compositing


def warp_image(img: Image, m: AffineMatrix, out_h: int, out_w: int) -> Image:
    """Inverse-map warp with bilinear sampling; out-of-bounds reads black."""
    inv = m.inverse()
    data = kernels.warp_bilinear(img.data, inv.m, int(out_h), int(out_w))
    return Image(np.clip(data, 0.0, 1.0))


def resize_bilinear(img: Image, out_h: int, out_w: int) -> Image:
    """Plain resize with half-pixel-center mapping and edge clamping."""
    if out_h == img.h and out_w == img.w:
        return img
    sx = img.w / out_w
    sy = img.h / out_h
    inv = np.array([[sx, 0.0, 0.5 * sx - 0.5], [0.0, sy, 0.5 * sy - 0.5]])
    data = kernels.warp_bilinear(img.data, inv, int(out_h), int(out_w), clamp_border=True)
    return Image(np.clip(data, 0.0, 1.0))


def paste_face(template: Image, face_id_img: Image, m: AffineMatrix, face_mask: Mask) -> Image:
    """The replaced image: warped face composited where face_mask > 0.5."""
    if (face_mask.h, face_mask.w) != (template.h, template.w):
        raise DimensionMismatch("face_mask dims must match template dims")
    warped = warp_image(face_id_img, m, template.h, template.w)
    keep = face_mask.data > 0.5
    out = template.data.copy()
    out[keep] = warped.data[keep]
    return Image(out)


# ---------------------------------------------------------------------------
# mask calculus


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, no duplicate endpoint."""
    pts = np.unique(points, axis=0)
    if len(pts) == 1:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def hull_mask(pts: LandmarkSet, h: int, w: int) -> Mask:
    """Filled convex hull of the points, pixel-center inclusion, binary."""
    if len(pts) < 3:
        raise LengthMismatch("hull needs at least 3 points")
    hull = _convex_hull(pts.as_array())
    if _polygon_area(hull) <= 0.0:
        raise DegenerateHull("landmarks are collinear; hull has zero area")

    x0 = max(0, int(np.floor(hull[:, 0].min())))
    x1 = min(w - 1, int(np.ceil(hull[:, 0].max())))
    y0 = max(0, int(np.floor(hull[:, 1].min())))
    y1 = min(h - 1, int(np.ceil(hull[:, 1].max())))
    out = np.zeros((h, w), dtype=bool)
    if x0 > x1 or y0 > y1:
        return Mask.from_bool(out)

    xs = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    ys = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    inside = np.ones((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
    n = len(hull)
    for i in range(n):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % n]
        # monotone chain emits algebraic-CCW order; interior lies at cross >= 0
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        inside &= cross >= -1e-9
    out[y0:y1 + 1, x0:x1 + 1] = inside
    return Mask.from_bool(out)


def dilate(mask: Mask, radius: int) -> Mask:
    """Binary dilation with a disc structuring element; radius 0 is identity."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return Mask.from_bool(kernels.disc_dilate(mask.binary(), int(radius)))


def erode(mask: Mask, radius: int) -> Mask:
    """Dual of dilate; pixels beyond the border do not count as background."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    inv = ~mask.binary()
    return Mask.from_bool(~kernels.disc_dilate(inv, int(radius)))


def bbox_mask(bbox: BBox, h: int, w: int) -> Mask:
    """Pixels whose centers lie in the half-open bbox rectangle [x0, x1) x [y0, y1)."""
    b = bbox.clamped(h, w)
    out = np.zeros((h, w), dtype=bool)
    x0 = int(np.ceil(b.x0 - 1e-9))
    x1 = int(np.ceil(b.x1 - 1e-9))
    y0 = int(np.ceil(b.y0 - 1e-9))
    y1 = int(np.ceil(b.y1 - 1e-9))
    out[max(0, y0):min(h, y1), max(0, x0):min(w, x1)] = True
    return Mask.from_bool(out)


def calibrate_face_mask(landmarks: LandmarkSet, bbox: BBox, h: int, w: int,
                        ear_expand_ratio: float = 0.1) -> Mask:
    """Face-region mask: hull of landmarks union bbox, expanded sideways.

    The expansion radius is round(ear_expand_ratio * bbox width) so the
    mask reaches past the cheeks to cover the ears.
    """
    if not 0.0 <= ear_expand_ratio <= 1.0:
        raise ValueError("ear_expand_ratio must be in [0, 1]")
    hull = hull_mask(landmarks, h, w)
    base = Mask.from_bool(hull.binary() | bbox_mask(bbox, h, w).binary())
    radius = int(round(ear_expand_ratio * bbox.width))
    if radius == 0:
        return base
    return dilate(base, radius)


def boundary_ring(mask: Mask, r_out: int, r_in: int) -> Mask:
    """Annulus covering the paste seam: dilate(r_out) minus erode(r_in)."""
    if r_out < 1:
        raise ValueError("r_out must be >= 1")
    if r_in < 0:
        raise ValueError("r_in must be >= 0")
    outer = dilate(mask, r_out).binary()
    inner = erode(mask, r_in).binary()
    return Mask.from_bool(outer & ~inner)


def segment_mask(a: Point2, b: Point2, h: int, w: int) -> Mask:
    """Pixels touched by the segment a-b (dense sampling, deterministic)."""
    length = float(np.hypot(b.x - a.x, b.y - a.y))
    steps = max(2, int(np.ceil(length * 2)) + 1)
    ts = np.linspace(0.0, 1.0, steps)
    xs = np.rint(a.x + (b.x - a.x) * ts).astype(np.int64)
    ys = np.rint(a.y + (b.y - a.y) * ts).astype(np.int64)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    out = np.zeros((h, w), dtype=bool)
    out[ys[keep], xs[keep]] = True
    return Mask.from_bool(out)


def mouth_mask(landmarks: LandmarkSet, bbox: BBox, h: int, w: int) -> Mask:
    """Mouth-region mask: the mouth-corner segment dilated by 0.15 * bbox width."""
    left, right = landmarks.mouth_corners
    seg = segment_mask(left, right, h, w)
    radius = int(round(0.15 * bbox.width))
    return dilate(seg, radius)


# ---------------------------------------------------------------------------
# blending


def feathered_blend(base: Image, patch: Image, mask: Mask, feather_radius: int) -> Image:
    """out = (1 - m) * base + m * patch with the mask box-feathered.

    feather 0 uses the mask as-is; a uniform mask is invariant under the
    normalized blur, so an all-ones mask returns the patch exactly.
    """
    if (base.h, base.w) != (patch.h, patch.w) or (base.h, base.w) != (mask.h, mask.w):
        raise DimensionMismatch("base, patch and mask dims must match")
    if feather_radius < 0:
        raise ValueError("feather_radius must be >= 0")
    if feather_radius == 0:
        m = mask.data
    else:
        m = np.clip(kernels.box_blur(mask.data, int(feather_radius)), 0.0, 1.0)
    m3 = m[:, :, None].astype(np.float64)
    out = (1.0 - m3) * base.data.astype(np.float64) + m3 * patch.data.astype(np.float64)
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))

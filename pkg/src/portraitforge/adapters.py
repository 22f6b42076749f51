"""Pluggable interfaces for the external learned models the pipelines use,
plus deterministic reference implementations of each.

The reference stack (detector, embedder, matting, retouch, enhance,
fuser) is pure math over the fiducial format and needs no model weights;
real models plug in through the same interfaces via external commands.
"""

from __future__ import annotations

import base64
import json
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import ndimage

from . import fiducial, pngio
from .errors import AdapterFailure, DegenerateCrop, DimensionMismatch
from .geometry import (
    BBox,
    Image,
    LandmarkSet,
    Mask,
    estimate_alignment,
    feathered_blend,
    hull_mask,
    warp_image,
)
from . import kernels

EMBED_GRID = 8  # reference embeddings are 8x8 gray stats -> 64 dims


@dataclass(frozen=True)
class FaceDetection:
    bbox: BBox
    confidence: float
    landmarks: LandmarkSet

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class FaceEmbedding:
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).ravel()
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding must be unit norm, got {norm}")
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


# ---------------------------------------------------------------------------
# reference implementations


def detect_faces(img: Image) -> list[FaceDetection]:
    """Scan for fiducial faces; detections sorted by bbox center x.

    Matching is tolerance-based so faces survive crops and bilinear
    resizes; the material mask is bridged by a 2 px dilation before
    labeling because resampling leaves thin impure seams between the
    pure-color islands.
    """
    material = fiducial.material_mask(img.data)
    if not material.any():
        return []
    bridged = kernels.disc_dilate(material, 2)
    labels, count = ndimage.label(bridged, structure=np.ones((3, 3), dtype=int))
    detections = []
    for lab in range(1, count + 1):
        region = (labels == lab) & material
        ys, xs = np.nonzero(region)
        if len(ys) == 0:
            continue
        x0, x1 = int(xs.min()), int(xs.max()) + 1
        y0, y1 = int(ys.min()), int(ys.max()) + 1
        if x1 - x0 < 4 or y1 - y0 < 4:
            continue
        marks = []
        ok = True
        for color in fiducial.MARKER_COLORS:
            hits = fiducial.color_matches(img.data, color) & region
            if not hits.any():
                ok = False
                break
            my, mx = np.nonzero(hits)
            marks.append((float(mx.mean()), float(my.mean())))
        if not ok:
            continue
        clamped = [
            (min(max(x, 0.0), img.w - 1.0), min(max(y, 0.0), img.h - 1.0))
            for x, y in marks
        ]
        coverage = float(region.sum()) / float((x1 - x0) * (y1 - y0))
        detections.append(
            FaceDetection(
                bbox=BBox(x0, y0, x1, y1),
                confidence=min(1.0, coverage),
                landmarks=LandmarkSet.from_array(np.array(clamped)),
            )
        )
    detections.sort(key=lambda d: d.bbox.center[0])
    return detections


def _crop_window(img: Image, bbox: BBox) -> np.ndarray:
    b = bbox.clamped(img.h, img.w)
    x0 = max(0, int(np.ceil(b.x0 - 1e-9)))
    x1 = min(img.w, int(np.ceil(b.x1 - 1e-9)))
    y0 = max(0, int(np.ceil(b.y0 - 1e-9)))
    y1 = min(img.h, int(np.ceil(b.y1 - 1e-9)))
    if x1 <= x0 or y1 <= y0:
        raise DegenerateCrop("bbox covers no pixels")
    return img.data[y0:y1, x0:x1, :]


def _block_mean_grid(gray: np.ndarray, grid: int) -> np.ndarray:
    """Block-mean pooling onto a grid x grid lattice (area-average style)."""
    h, w = gray.shape
    out = np.zeros((grid, grid), dtype=np.float64)
    for i in range(grid):
        ys = i * h // grid
        ye = min(h, max(ys + 1, (i + 1) * h // grid))
        for j in range(grid):
            xs = j * w // grid
            xe = min(w, max(xs + 1, (j + 1) * w // grid))
            out[i, j] = float(gray[ys:ye, xs:xe].mean())
    return out


def embed_face(img: Image, bbox: BBox) -> FaceEmbedding:
    """Crop, grayscale, pool to 8x8, mean-subtract, L2-normalize."""
    crop = _crop_window(img, bbox)
    gray = crop.astype(np.float64).mean(axis=2)
    pooled = _block_mean_grid(gray, EMBED_GRID).ravel()
    centered = pooled - pooled.mean()
    norm = float(np.linalg.norm(centered))
    if norm < 1e-9:
        raise DegenerateCrop("constant crop has no embeddable structure")
    return FaceEmbedding(centered / norm)


def face_similarity(a: FaceEmbedding, b: FaceEmbedding) -> float:
    """Cosine similarity of unit vectors; the identity gap is 1 - similarity."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))


def saliency_matte(img: Image) -> Mask:
    """Foreground = pixels whose color stands out from the border median."""
    data = img.data.astype(np.float64)
    border = np.concatenate([
        data[0, :, :], data[-1, :, :], data[:, 0, :], data[:, -1, :]
    ])
    med = np.median(border, axis=0)
    dist = np.sqrt(((data - med[None, None, :]) ** 2).sum(axis=2))
    dist = dist / max(float(dist.max()), 1e-9)
    return Mask((dist > 0.3).astype(np.float32))


def retouch_skin(img: Image) -> Image:
    """Soften the salient region: 3x3 box blur blended at 0.3 inside the matte."""
    matte = saliency_matte(img).data.astype(np.float64)[:, :, None]
    blur = kernels.box_blur(img.data, 1).astype(np.float64)
    out = img.data.astype(np.float64) + 0.3 * matte * (blur - img.data.astype(np.float64))
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def enhance_portrait(img: Image) -> Image:
    """Mild unsharp mask, amount 0.2."""
    blur = kernels.box_blur(img.data, 1).astype(np.float64)
    out = img.data.astype(np.float64) + 0.2 * (img.data.astype(np.float64) - blur)
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def fuse_faces(template: Image, donor: Image, donor_landmarks: LandmarkSet,
               template_landmarks: LandmarkSet) -> Image:
    """Blend the aligned donor face over the template inside the landmark hull."""
    if len(donor_landmarks) != len(template_landmarks):
        raise DimensionMismatch("landmark sets must have equal length")
    m = estimate_alignment(donor_landmarks, template_landmarks)
    warped = warp_image(donor, m, template.h, template.w)
    region = hull_mask(template_landmarks, template.h, template.w)
    return feathered_blend(template, warped, region, feather_radius=4)


# ---------------------------------------------------------------------------
# adapter interfaces and registry


class FaceDetectorAdapter(Protocol):
    thread_safe: bool

    def detect(self, img: Image) -> list[FaceDetection]: ...


class FaceEmbedderAdapter(Protocol):
    thread_safe: bool

    def embed(self, img: Image, bbox: BBox) -> FaceEmbedding: ...


class ReferenceDetector:
    adapter_id = "reference"
    thread_safe = True

    def detect(self, img: Image) -> list[FaceDetection]:
        return detect_faces(img)


class ReferenceEmbedder:
    adapter_id = "reference"
    thread_safe = True

    def embed(self, img: Image, bbox: BBox) -> FaceEmbedding:
        return embed_face(img, bbox)


class ReferenceMatting:
    adapter_id = "reference"
    thread_safe = True

    def matte(self, img: Image) -> Mask:
        return saliency_matte(img)


class ReferenceRetouch:
    adapter_id = "reference"
    thread_safe = True

    def retouch(self, img: Image) -> Image:
        return retouch_skin(img)


class ReferenceEnhance:
    adapter_id = "reference"
    thread_safe = True

    def enhance(self, img: Image) -> Image:
        return enhance_portrait(img)


class ReferenceFuser:
    adapter_id = "reference"
    thread_safe = True

    def fuse(self, template: Image, donor: Image, donor_landmarks: LandmarkSet,
             template_landmarks: LandmarkSet) -> Image:
        return fuse_faces(template, donor, donor_landmarks, template_landmarks)


class CommandAdapter:
    """Bridge to an external model process.

    Protocol: one JSON object on stdin (images as base64 PNG), one JSON
    object on stdout. Declared not thread safe; the registry serializes
    calls.
    """

    thread_safe = False

    def __init__(self, interface: str, command: str):
        self.interface = interface
        self.command = command
        self.adapter_id = f"command:{command}"

    def _call(self, payload: dict) -> dict:
        try:
            proc = subprocess.run(
                self.command, shell=True, input=json.dumps(payload).encode(),
                capture_output=True, timeout=120,
            )
        except (OSError, subprocess.SubprocessError) as exc:
            raise AdapterFailure(f"{self.interface} adapter failed: {exc}") from exc
        if proc.returncode != 0:
            raise AdapterFailure(
                f"{self.interface} adapter exited {proc.returncode}: "
                f"{proc.stderr.decode(errors='replace')[:500]}"
            )
        try:
            return json.loads(proc.stdout.decode())
        except (ValueError, UnicodeDecodeError) as exc:
            raise AdapterFailure(f"{self.interface} adapter returned bad JSON") from exc

    @staticmethod
    def _img_b64(img: Image) -> str:
        return base64.b64encode(pngio.encode_png(img)).decode("ascii")

    @staticmethod
    def _b64_img(s: str) -> Image:
        return pngio.decode_image(base64.b64decode(s))

    def detect(self, img: Image) -> list[FaceDetection]:
        resp = self._call({"v": 1, "op": "detect", "image": self._img_b64(img)})
        out = []
        for d in resp.get("faces", []):
            out.append(FaceDetection(
                bbox=BBox(*[float(v) for v in d["bbox"]]),
                confidence=float(d.get("confidence", 1.0)),
                landmarks=LandmarkSet.from_array(np.array(d["landmarks"], dtype=float)),
            ))
        out.sort(key=lambda d: d.bbox.center[0])
        return out

    def embed(self, img: Image, bbox: BBox) -> FaceEmbedding:
        resp = self._call({
            "v": 1, "op": "embed", "image": self._img_b64(img),
            "bbox": [bbox.x0, bbox.y0, bbox.x1, bbox.y1],
        })
        return FaceEmbedding(np.array(resp["vector"], dtype=np.float64))

    def matte(self, img: Image) -> Mask:
        resp = self._call({"v": 1, "op": "matte", "image": self._img_b64(img)})
        return Mask(self._b64_img(resp["mask"]).data[:, :, 0])

    def retouch(self, img: Image) -> Image:
        resp = self._call({"v": 1, "op": "retouch", "image": self._img_b64(img)})
        return self._b64_img(resp["image"])

    def enhance(self, img: Image) -> Image:
        resp = self._call({"v": 1, "op": "enhance", "image": self._img_b64(img)})
        return self._b64_img(resp["image"])

    def fuse(self, template: Image, donor: Image, donor_landmarks: LandmarkSet,
             template_landmarks: LandmarkSet) -> Image:
        resp = self._call({
            "v": 1, "op": "fuse",
            "template": self._img_b64(template), "donor": self._img_b64(donor),
            "donor_landmarks": donor_landmarks.as_array().tolist(),
            "template_landmarks": template_landmarks.as_array().tolist(),
        })
        return self._b64_img(resp["image"])


class HttpAdapter(CommandAdapter):
    """External model service: same JSON payloads as CommandAdapter but
    POSTed to a URL (one JSON object per request/response)."""

    thread_safe = False

    def __init__(self, interface: str, url: str, timeout: float = 120.0):
        self.interface = interface
        self.url = url
        self.timeout = timeout
        self.adapter_id = url

    def _call(self, payload: dict) -> dict:
        import urllib.error
        import urllib.request

        req = urllib.request.Request(
            self.url, data=json.dumps(payload).encode(),
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode())
        except (urllib.error.URLError, OSError, TimeoutError, ValueError) as exc:
            raise AdapterFailure(f"{self.interface} adapter at {self.url}: {exc}") from exc


class _Serialized:
    """Wraps a non-thread-safe adapter with a per-adapter lock."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()
        self.adapter_id = getattr(inner, "adapter_id", inner.__class__.__name__)
        self.thread_safe = True

    def __getattr__(self, name):
        attr = getattr(self._inner, name)
        if not callable(attr):
            return attr
        lock = self._lock

        def wrapped(*args, **kwargs):
            with lock:
                return attr(*args, **kwargs)

        return wrapped


INTERFACES = ("detector", "embedder", "matting", "retouch", "enhance", "fuser")

_REFERENCE = {
    "detector": ReferenceDetector,
    "embedder": ReferenceEmbedder,
    "matting": ReferenceMatting,
    "retouch": ReferenceRetouch,
    "enhance": ReferenceEnhance,
    "fuser": ReferenceFuser,
}


class AdapterRegistry:
    """Named bindings interface -> implementation, resolved from config.

    Config keys are ``adapter.<interface>`` with value ``reference`` or
    ``command:<shell command>``. Every interface gets exactly one
    binding; omitted keys bind the reference implementation.
    """

    def __init__(self, bindings: dict[str, str] | None = None):
        bindings = dict(bindings or {})
        self._adapters: dict[str, object] = {}
        for name in INTERFACES:
            spec = bindings.pop(name, "reference")
            self._adapters[name] = self._build(name, spec)
        if bindings:
            raise ValueError(f"unknown adapter interfaces: {sorted(bindings)}")

    @staticmethod
    def _build(name: str, spec: str):
        if spec == "reference":
            return _REFERENCE[name]()
        if spec.startswith("command:"):
            return _Serialized(CommandAdapter(name, spec[len("command:"):]))
        if spec.startswith(("http://", "https://")):
            return _Serialized(HttpAdapter(name, spec))
        raise ValueError(f"adapter.{name}: unsupported binding {spec!r}")

    def __getitem__(self, name: str):
        return self._adapters[name]

    @property
    def detector(self) -> ReferenceDetector:
        return self._adapters["detector"]

    @property
    def embedder(self) -> ReferenceEmbedder:
        return self._adapters["embedder"]

    @property
    def matting(self) -> ReferenceMatting:
        return self._adapters["matting"]

    @property
    def retouch(self) -> ReferenceRetouch:
        return self._adapters["retouch"]

    @property
    def enhance(self) -> ReferenceEnhance:
        return self._adapters["enhance"]

    @property
    def fuser(self) -> ReferenceFuser:
        return self._adapters["fuser"]

    def ids(self) -> dict[str, str]:
        return {
            name: getattr(a, "adapter_id", a.__class__.__name__)
            for name, a in self._adapters.items()
        }

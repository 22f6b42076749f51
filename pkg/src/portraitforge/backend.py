"""The generative-model boundary: the inpaint request contract, the
deterministic mock backend, and the JSON-over-HTTP client for a real
diffusion service.

Every backend honors the same contract: pixels under mask < 0.5 come
back unchanged within 1/255 per channel, identical requests (same seed)
return identical images, and output stays in [0, 1]. The mock backend
satisfies all three bit-exactly, which is what makes the rest of the
system testable without GPUs.
"""

from __future__ import annotations

import base64
import json
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import kernels, pngio
from .controls import ControlUnit
from .errors import BackendUnavailable, InvalidRequest
from .geometry import Image, Mask
from .lora import MergedLora

MAX_SEED = 2**64 - 1

# stage defaults; unstated upstream, exposed through GenerationOptions/config
FIRST_STAGE_STRENGTH = 0.7
FIRST_STAGE_STEPS = 30
SECOND_STAGE_STRENGTH = 0.3
SECOND_STAGE_STEPS = 20
DEFAULT_CONTROL_WEIGHTS = {"canny": 1.0, "color": 0.85, "openpose": 1.0, "tile": 1.0}

MOCK_NOISE_AMPLITUDE = 0.05
MOCK_LORA_GAIN = 0.01


@dataclass(frozen=True, eq=False)
class InpaintRequest:
    image: Image
    mask: Mask
    prompt: str = ""
    negative_prompt: str = ""
    controls: list[ControlUnit] = field(default_factory=list)
    lora: MergedLora | None = None
    denoise_strength: float = FIRST_STAGE_STRENGTH
    seed: int = 0
    steps: int = FIRST_STAGE_STEPS

    def __post_init__(self):
        if (self.mask.h, self.mask.w) != (self.image.h, self.image.w):
            raise InvalidRequest("mask dims must match image dims")
        for unit in self.controls:
            ref = unit.reference
            if (ref.h, ref.w) != (self.image.h, self.image.w):
                raise InvalidRequest(f"{unit.kind} reference dims must match image dims")
        if not 0.0 < self.denoise_strength <= 1.0:
            raise InvalidRequest("denoise_strength must be in (0, 1]")
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise InvalidRequest("seed must be a 64-bit unsigned integer")
        if self.steps < 1:
            raise InvalidRequest("steps must be >= 1")


class DiffusionBackend(Protocol):
    backend_id: str
    max_concurrency: int | None

    def inpaint(self, req: InpaintRequest) -> Image: ...


class MockBackend:
    """Deterministic inpaint: blend toward the control average plus hash noise.

    Inside the mask: out = clamp((1-s)*in + s*(base + 0.05*n), 0, 1) with
    base the weight-averaged control references (0.5 with no controls)
    plus a small uniform shift when a merged adapter is attached, and n
    the per-pixel splitmix64 noise keyed by (seed, x, y, channel).
    Outside the mask pixels pass through bit-exact.
    """

    backend_id = "mock"
    max_concurrency = None  # pure function, unlimited

    def inpaint(self, req: InpaintRequest) -> Image:
        sel = req.mask.data >= 0.5
        out = req.image.data.copy()
        if not sel.any():
            return Image(out)

        h, w = req.image.h, req.image.w
        total_weight = 0.0
        for unit in req.controls:
            total_weight += unit.weight
        if req.controls and total_weight > 0.0:
            base = np.zeros((h, w, 3), dtype=np.float64)
            for unit in req.controls:
                base += unit.weight * unit.reference.data.astype(np.float64)
            base /= total_weight
        else:
            base = np.full((h, w, 3), 0.5, dtype=np.float64)
        if req.lora is not None:
            # rounded so libm tanh jitter can never leak into image bytes
            base = base + round(MOCK_LORA_GAIN * math.tanh(req.lora.mean_value()), 12)

        noise = kernels.noise_field(int(req.seed), h, w, 3)
        s = float(req.denoise_strength)
        blended = (1.0 - s) * req.image.data.astype(np.float64) \
            + s * (base + MOCK_NOISE_AMPLITUDE * noise)
        blended = np.clip(blended, 0.0, 1.0).astype(np.float32)
        out[sel] = blended[sel]
        return Image(out)


def mock_inpaint(req: InpaintRequest) -> Image:
    return MockBackend().inpaint(req)


class RecordingBackend:
    """Wraps a backend and keeps the request list; used for provenance
    assertions and the control-structure tests."""

    def __init__(self, inner: DiffusionBackend):
        self.inner = inner
        self.requests: list[InpaintRequest] = []

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    @property
    def max_concurrency(self):
        return self.inner.max_concurrency

    def inpaint(self, req: InpaintRequest) -> Image:
        self.requests.append(req)
        return self.inner.inpaint(req)


class ExternalBackend:
    """Client for a diffusion service speaking line-delimited JSON over HTTP.

    One request object per line on POST <url>/inpaint; images travel as
    base64 PNG. Stage parameters pass through verbatim. The service is
    expected to honor the inpaint contract; the same conformance suite
    that covers the mock can be pointed at it.
    """

    max_concurrency = 1

    def __init__(self, url: str, timeout: float = 300.0):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.backend_id = f"external:{self.url}"

    def inpaint(self, req: InpaintRequest) -> Image:
        mask_rgb = Image(np.repeat(req.mask.data[:, :, None], 3, axis=2))
        payload = {
            "v": 1,
            "image": base64.b64encode(pngio.encode_png(req.image)).decode("ascii"),
            "mask": base64.b64encode(pngio.encode_png(mask_rgb)).decode("ascii"),
            "prompt": req.prompt,
            "negative_prompt": req.negative_prompt,
            "controls": [
                {
                    "kind": u.kind,
                    "weight": u.weight,
                    "reference": base64.b64encode(pngio.encode_png(u.reference)).decode("ascii"),
                }
                for u in req.controls
            ],
            "lora": None if req.lora is None else {
                "provenance": [[cid, w] for cid, w in req.lora.provenance],
                "tensors": {
                    k: {
                        "shape": list(t.shape),
                        "data": base64.b64encode(
                            np.ascontiguousarray(t, dtype="<f4").tobytes()
                        ).decode("ascii"),
                    }
                    for k, t in req.lora.tensors.items()
                },
            },
            "denoise_strength": req.denoise_strength,
            "seed": int(req.seed),
            "steps": req.steps,
        }
        body = (json.dumps(payload, sort_keys=True) + "\n").encode()
        http_req = urllib.request.Request(
            self.url + "/inpaint", data=body,
            headers={"Content-Type": "application/x-ndjson"},
        )
        try:
            with urllib.request.urlopen(http_req, timeout=self.timeout) as resp:
                line = resp.readline()
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise BackendUnavailable(f"diffusion service at {self.url}: {exc}") from exc
        try:
            data = json.loads(line.decode())
        except (ValueError, UnicodeDecodeError) as exc:
            raise BackendUnavailable("diffusion service returned a bad response") from exc
        if "error" in data:
            raise InvalidRequest(str(data["error"]))
        return pngio.decode_image(base64.b64decode(data["image"]))


def make_backend(spec: str) -> DiffusionBackend:
    """Build a backend from a config value: ``mock`` or ``external:<url>``."""
    if spec == "mock":
        return MockBackend()
    if spec.startswith("external:"):
        return ExternalBackend(spec[len("external:"):])
    raise ValueError(f"unknown backend {spec!r}")

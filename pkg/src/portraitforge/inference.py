"""Two-stage portrait generation.

Stage one inpaints the calibrated face region of the fused input under
edge, color and pose guidance; stage two repairs the paste seam (and
optionally the mouth) under edge and detail guidance; post-processing
restores template size and applies retouch and enhancement. The
multi-user flow splits the template into per-face sub-problems, runs the
single-user pipeline on each, and finishes with one seam inpaint over
the union of the boundary rings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .adapters import AdapterRegistry, FaceDetection
from .backend import (
    DEFAULT_CONTROL_WEIGHTS,
    FIRST_STAGE_STEPS,
    FIRST_STAGE_STRENGTH,
    MAX_SEED,
    SECOND_STAGE_STEPS,
    SECOND_STAGE_STRENGTH,
    DiffusionBackend,
    InpaintRequest,
    MockBackend,
)
from .controls import ControlUnit, canny_reference, color_reference, openpose_reference, tile_reference
from .errors import NoFacesFound, PortraitForgeError, UserCountMismatch
from .geometry import (
    AffineMatrix,
    BBox,
    Image,
    LandmarkSet,
    Mask,
    boundary_ring,
    calibrate_face_mask,
    estimate_alignment,
    mouth_mask,
    paste_face,
    resize_bilinear,
)
from .lora import MergedLora
from .runs import UserBundle
from .training import FIXED_PROMPT


class StageFailure(PortraitForgeError):
    """A pipeline stage failed; carries the stage label."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class GenerationOptions:
    seed: int = 0
    mouth_refine: bool = True
    ear_expand_ratio: float = 0.1
    first_strength: float = FIRST_STAGE_STRENGTH
    first_steps: int = FIRST_STAGE_STEPS
    second_strength: float = SECOND_STAGE_STRENGTH
    second_steps: int = SECOND_STAGE_STEPS
    control_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CONTROL_WEIGHTS))
    ring_outer: int = 8
    ring_inner: int = 4
    style: str = "realistic"
    prompt: str = FIXED_PROMPT
    negative_prompt: str = ""

    def __post_init__(self):
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for name, s in (("first_strength", self.first_strength),
                        ("second_strength", self.second_strength)):
            if not 0.0 < s <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.first_steps < 1 or self.second_steps < 1:
            raise ValueError("step counts must be >= 1")
        if not 0.0 <= self.ear_expand_ratio <= 1.0:
            raise ValueError("ear_expand_ratio must be in [0, 1]")
        if self.ring_outer < 1 or self.ring_inner < 0:
            raise ValueError("ring radii out of range")

    def weight(self, kind: str) -> float:
        return float(self.control_weights.get(kind, DEFAULT_CONTROL_WEIGHTS[kind]))


@dataclass
class PreparedInputs:
    replaced: Image
    fused: Image
    inpaint_mask: Mask
    template_landmarks: LandmarkSet
    m: AffineMatrix
    template_bbox: BBox
    roop_landmarks: LandmarkSet


@dataclass
class GenerationResult:
    image: Image
    provenance: dict


def _detect_exactly_one(img: Image, what: str, adapters: AdapterRegistry) -> FaceDetection:
    dets = adapters.detector.detect(img)
    if len(dets) != 1:
        raise NoFacesFound(f"{what} must contain exactly one detectable face, found {len(dets)}")
    return dets[0]


def prepare_inputs(template: Image, face_id: Image, roop: Image,
                   opts: GenerationOptions,
                   adapters: AdapterRegistry | None = None,
                   face_id_landmarks: LandmarkSet | None = None) -> PreparedInputs:
    """Build the replaced image, the fused image and the inpaint mask.

    ``face_id_landmarks`` short-circuits detection on the face_id image;
    training stores them because generated images do not re-detect under
    the reference stack.
    """
    adapters = adapters or AdapterRegistry()
    dets = adapters.detector.detect(template)
    if not dets:
        raise NoFacesFound("template has no detectable face")
    face = max(dets, key=lambda d: d.bbox.area())

    if face_id_landmarks is None:
        face_id_landmarks = _detect_exactly_one(face_id, "face_id", adapters).landmarks
    roop_landmarks = _detect_exactly_one(roop, "roop", adapters).landmarks

    m = estimate_alignment(face_id_landmarks, face.landmarks)
    inpaint_mask = calibrate_face_mask(face.landmarks, face.bbox,
                                       template.h, template.w, opts.ear_expand_ratio)
    replaced = paste_face(template, face_id, m, inpaint_mask)
    fused = adapters.fuser.fuse(template, roop, roop_landmarks, face.landmarks)
    return PreparedInputs(
        replaced=replaced,
        fused=fused,
        inpaint_mask=inpaint_mask,
        template_landmarks=face.landmarks,
        m=m,
        template_bbox=face.bbox,
        roop_landmarks=roop_landmarks,
    )


def first_diffusion(prep: PreparedInputs, lora: MergedLora | None,
                    opts: GenerationOptions,
                    backend: DiffusionBackend | None = None) -> Image:
    """Repaint the face region of the fused image under three control units."""
    backend = backend or MockBackend()
    h, w = prep.fused.h, prep.fused.w
    controls = [
        ControlUnit("canny", canny_reference(prep.fused), opts.weight("canny")),
        ControlUnit("color", color_reference(prep.fused), opts.weight("color")),
        ControlUnit("openpose", openpose_reference(prep.template_landmarks, h, w),
                    opts.weight("openpose")),
    ]
    req = InpaintRequest(
        image=prep.fused, mask=prep.inpaint_mask,
        prompt=opts.prompt, negative_prompt=opts.negative_prompt,
        controls=controls, lora=lora,
        denoise_strength=opts.first_strength, steps=opts.first_steps,
        seed=int(opts.seed),
    )
    return backend.inpaint(req)


def second_stage_mask(prep: PreparedInputs, opts: GenerationOptions) -> Mask:
    ring = boundary_ring(prep.inpaint_mask, opts.ring_outer, opts.ring_inner)
    if not opts.mouth_refine:
        return ring
    mouth = mouth_mask(prep.template_landmarks, prep.template_bbox,
                       prep.fused.h, prep.fused.w)
    return Mask.from_bool(ring.binary() | mouth.binary())


def second_diffusion(first_out: Image, prep: PreparedInputs, roop: Image,
                     lora: MergedLora | None, opts: GenerationOptions,
                     backend: DiffusionBackend | None = None,
                     adapters: AdapterRegistry | None = None) -> Image:
    """Repair the seam (and optionally the mouth) on the re-fused result."""
    backend = backend or MockBackend()
    adapters = adapters or AdapterRegistry()
    if (first_out.h, first_out.w) != (prep.fused.h, prep.fused.w):
        raise ValueError("first stage output dims must match the template")
    input2 = adapters.fuser.fuse(first_out, roop, prep.roop_landmarks,
                                 prep.template_landmarks)
    mask2 = second_stage_mask(prep, opts)
    controls = [
        ControlUnit("canny", canny_reference(input2), opts.weight("canny")),
        ControlUnit("tile", tile_reference(input2), opts.weight("tile")),
    ]
    req = InpaintRequest(
        image=input2, mask=mask2,
        prompt=opts.prompt, negative_prompt=opts.negative_prompt,
        controls=controls, lora=lora,
        denoise_strength=opts.second_strength, steps=opts.second_steps,
        seed=(int(opts.seed) + 1) & MAX_SEED,
    )
    return backend.inpaint(req)


def post_process(img: Image, template_h: int, template_w: int,
                 adapters: AdapterRegistry | None = None) -> Image:
    """Restore template size, then retouch and enhance."""
    adapters = adapters or AdapterRegistry()
    out = resize_bilinear(img, template_h, template_w)
    out = adapters.retouch.retouch(out)
    return adapters.enhance.enhance(out)


def _control_summary(units: list[ControlUnit]) -> list[dict]:
    return [{"kind": u.kind, "weight": u.weight} for u in units]


def generate_portrait(template: Image, user: UserBundle, opts: GenerationOptions,
                      backend: DiffusionBackend | None = None,
                      adapters: AdapterRegistry | None = None,
                      template_ref: str = "inline") -> GenerationResult:
    """Full single-user pipeline with a provenance record."""
    backend = backend or MockBackend()
    adapters = adapters or AdapterRegistry()
    timings: dict[str, float] = {}

    def run(stage: str, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except PortraitForgeError as exc:
            raise StageFailure(stage, exc) from exc
        timings[stage] = time.perf_counter() - t0
        return out

    prep = run("prepare", lambda: prepare_inputs(
        template, user.face_id, user.roop, opts, adapters,
        face_id_landmarks=user.face_id_landmarks))
    first = run("stage1", lambda: first_diffusion(prep, user.merged, opts, backend))
    second = run("stage2", lambda: second_diffusion(
        first, prep, user.roop, user.merged, opts, backend, adapters))
    final = run("postprocess", lambda: post_process(
        second, template.h, template.w, adapters))

    provenance = {
        "v": 1,
        "template": template_ref,
        "user_ids": [user.user_id],
        "style": opts.style,
        "seeds": {"stage1": int(opts.seed), "stage2": (int(opts.seed) + 1) & MAX_SEED},
        "stages": [
            {
                "name": "stage1",
                "strength": opts.first_strength,
                "steps": opts.first_steps,
                "controls": [
                    {"kind": "canny", "weight": opts.weight("canny")},
                    {"kind": "color", "weight": opts.weight("color")},
                    {"kind": "openpose", "weight": opts.weight("openpose")},
                ],
            },
            {
                "name": "stage2",
                "strength": opts.second_strength,
                "steps": opts.second_steps,
                "controls": [
                    {"kind": "canny", "weight": opts.weight("canny")},
                    {"kind": "tile", "weight": opts.weight("tile")},
                ],
            },
        ],
        "adapters": adapters.ids(),
        "backend": backend.backend_id,
        "timings": timings,
    }
    return GenerationResult(image=final, provenance=provenance)


def split_masks_multi(template: Image, opts: GenerationOptions | None = None,
                      adapters: AdapterRegistry | None = None
                      ) -> list[tuple[FaceDetection, Image, Mask]]:
    """Per-face sub-problems: each sub-image whites out every other face."""
    opts = opts or GenerationOptions()
    adapters = adapters or AdapterRegistry()
    dets = adapters.detector.detect(template)
    if not dets:
        raise NoFacesFound("template has no detectable face")
    masks = [
        calibrate_face_mask(d.landmarks, d.bbox, template.h, template.w,
                            opts.ear_expand_ratio)
        for d in dets
    ]
    out = []
    for i, det in enumerate(dets):
        sub = template.data.copy()
        for j, other in enumerate(masks):
            if j != i:
                sub[other.binary()] = 1.0
        out.append((det, Image(sub), masks[i]))
    return out


def generate_group(template: Image, users: list[UserBundle], opts: GenerationOptions,
                   backend: DiffusionBackend | None = None,
                   adapters: AdapterRegistry | None = None,
                   template_ref: str = "inline") -> GenerationResult:
    """Multi-user pipeline: left-to-right face assignment, per-face
    generation without post-processing, composite, one seam inpaint over
    the ring union, then a single global post-process."""
    backend = backend or MockBackend()
    adapters = adapters or AdapterRegistry()
    t0 = time.perf_counter()

    splits = split_masks_multi(template, opts, adapters)
    if len(users) != len(splits):
        raise UserCountMismatch(
            f"{len(users)} users for {len(splits)} detected faces")

    composite = template.data.copy()
    rings = np.zeros((template.h, template.w), dtype=bool)
    face_records = []
    for i, ((det, sub, mask), user) in enumerate(zip(splits, users)):
        try:
            prep = prepare_inputs(sub, user.face_id, user.roop, opts, adapters,
                                  face_id_landmarks=user.face_id_landmarks)
            first = first_diffusion(prep, user.merged, opts, backend)
            second = second_diffusion(first, prep, user.roop, user.merged, opts,
                                      backend, adapters)
        except PortraitForgeError as exc:
            raise StageFailure(f"face[{i}]", exc) from exc
        sel = mask.binary()
        composite[sel] = second.data[sel]
        rings |= boundary_ring(mask, opts.ring_outer, opts.ring_inner).binary()
        face_records.append({
            "index": i,
            "user_id": user.user_id,
            "bbox": [det.bbox.x0, det.bbox.y0, det.bbox.x1, det.bbox.y1],
        })

    composite_img = Image(composite)
    seam_req = InpaintRequest(
        image=composite_img, mask=Mask.from_bool(rings),
        prompt=opts.prompt, negative_prompt=opts.negative_prompt,
        controls=[ControlUnit("canny", canny_reference(composite_img),
                              opts.weight("canny"))],
        lora=None,
        denoise_strength=opts.second_strength, steps=opts.second_steps,
        seed=(int(opts.seed) + 1000) & MAX_SEED,
    )
    try:
        merged_out = backend.inpaint(seam_req)
    except PortraitForgeError as exc:
        raise StageFailure("merge", exc) from exc
    final = post_process(merged_out, template.h, template.w, adapters)

    provenance = {
        "v": 1,
        "template": template_ref,
        "user_ids": [u.user_id for u in users],
        "style": opts.style,
        "faces": face_records,
        "seeds": {
            "stage1": int(opts.seed),
            "stage2": (int(opts.seed) + 1) & MAX_SEED,
            "merge": (int(opts.seed) + 1000) & MAX_SEED,
        },
        "stages": [
            {"name": "stage1", "strength": opts.first_strength,
             "steps": opts.first_steps,
             "controls": [{"kind": "canny", "weight": opts.weight("canny")},
                          {"kind": "color", "weight": opts.weight("color")},
                          {"kind": "openpose", "weight": opts.weight("openpose")}]},
            {"name": "stage2", "strength": opts.second_strength,
             "steps": opts.second_steps,
             "controls": [{"kind": "canny", "weight": opts.weight("canny")},
                          {"kind": "tile", "weight": opts.weight("tile")}]},
            {"name": "merge", "strength": opts.second_strength,
             "steps": opts.second_steps,
             "controls": [{"kind": "canny", "weight": opts.weight("canny")}]},
        ],
        "adapters": adapters.ids(),
        "backend": backend.backend_id,
        "timings": {"total": time.perf_counter() - t0},
    }
    return GenerationResult(image=final, provenance=provenance)

"""Per-user adapter training: photo preprocessing, staged (mock or
external) training, checkpoint validation by identity score, ensemble
merging, and the identity reward used for downstream RL fine-tuning.

The validation step generates one image per checkpoint x template with
an edge-guidance unit built from the template, scores each against the
user's reference embeddings, and keeps the best-scoring image as the
alignment source for inference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .adapters import AdapterRegistry, FaceEmbedding
from .backend import (
    FIRST_STAGE_STEPS,
    FIRST_STAGE_STRENGTH,
    DiffusionBackend,
    InpaintRequest,
    MockBackend,
)
from .controls import ControlUnit, canny_reference
from .errors import DegenerateCrop, EmptyReport, NoFacesFound, TrainerFailure
from .geometry import BBox, Image, calibrate_face_mask, resize_bilinear
from .lora import LoraCheckpoint, MergedLora, merge_lora
from .rng import SplitMixStream, fnv1a64, splitmix64

log = logging.getLogger(__name__)

FIXED_PROMPT = "easyphoto_face, easyphoto, 1person"

MIN_TRAINING_IMAGES = 5
MAX_TRAINING_IMAGES = 20

PROCESSED_SIZE = 512

MOCK_TENSOR_SHAPES = {"lora.down": (16, 8), "lora.up": (8, 16)}


@dataclass
class TrainingConfig:
    user_id: str
    crop_ratio: float = 1.5
    stages: int = 4
    validation_templates: list[Image] = field(default_factory=list)
    top_k: int = 2
    min_images: int = MIN_TRAINING_IMAGES
    max_images: int = MAX_TRAINING_IMAGES
    allow_any_count: bool = False
    ear_expand_ratio: float = 0.1
    prompt_override: str | None = None  # expert escape hatch; normally fixed

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if not 1 <= self.top_k <= self.stages:
            raise ValueError("top_k must be in [1, stages]")

    @property
    def prompt(self) -> str:
        return self.prompt_override if self.prompt_override is not None else FIXED_PROMPT

    def check_image_count(self, count: int) -> None:
        if self.allow_any_count:
            return
        if count < self.min_images:
            raise ValueError(
                f"need at least {self.min_images} training images, got {count}"
            )
        if count > self.max_images:
            raise ValueError(
                f"at most {self.max_images} training images allowed, got {count}"
            )


@dataclass
class PreprocessResult:
    images: list[Image]
    skipped: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class ValidationReport:
    checkpoint_ids: list[str]
    stages: list[int]
    scores: list[list[float]]          # [checkpoint][template]
    images: list[list[Image | None]]   # generated validation images
    flagged: list[list[bool]]          # cells that failed and were scored -1
    best_stage_index: int
    best_template_index: int
    best_score: float

    def mean_scores(self) -> list[float]:
        return [float(np.mean(row)) for row in self.scores]

    def to_json_dict(self) -> dict:
        return {
            "v": 1,
            "checkpoints": self.checkpoint_ids,
            "scores": [[float(s) for s in row] for row in self.scores],
            "flagged": self.flagged,
            "best": {
                "stage": self.best_stage_index,
                "template": self.best_template_index,
                "score": float(self.best_score),
            },
        }


def preprocess_training_images(images: list[Image], cfg: TrainingConfig,
                               adapters: AdapterRegistry | None = None) -> PreprocessResult:
    """Crop to the largest face, matte the background to white, retouch,
    and resize to the training resolution. Faceless images are skipped
    with a record; if everything is skipped the user has no usable data.
    """
    adapters = adapters or AdapterRegistry()
    out: list[Image] = []
    skipped: list[tuple[int, str]] = []
    for idx, img in enumerate(images):
        dets = adapters.detector.detect(img)
        if not dets:
            skipped.append((idx, "no face detected"))
            log.warning("training image %d skipped: no face detected", idx)
            continue
        face = max(dets, key=lambda d: d.bbox.area())
        crop = _square_face_crop(img, face.bbox, cfg.crop_ratio)
        matte = adapters.matting.matte(crop).data.astype(np.float64)[:, :, None]
        white = np.ones_like(crop.data, dtype=np.float64)
        composited = Image(
            (matte * crop.data.astype(np.float64) + (1.0 - matte) * white).astype(np.float32)
        )
        clean = adapters.retouch.retouch(composited)
        out.append(resize_bilinear(clean, PROCESSED_SIZE, PROCESSED_SIZE))
    if not out:
        raise NoFacesFound("every training image was skipped")
    return PreprocessResult(images=out, skipped=skipped)


def _square_face_crop(img: Image, bbox: BBox, crop_ratio: float) -> Image:
    side = int(round(crop_ratio * bbox.height))
    side = max(8, min(side, img.h, img.w))
    cx, cy = bbox.center
    x0 = int(round(cx - side / 2.0))
    y0 = int(round(cy - side / 2.0))
    x0 = max(0, min(x0, img.w - side))
    y0 = max(0, min(y0, img.h - side))
    return Image(img.data[y0:y0 + side, x0:x0 + side, :].copy())


class TrainerBackend(Protocol):
    trainer_id: str

    def train(self, processed: list[Image], cfg: TrainingConfig) -> list[LoraCheckpoint]: ...


class MockTrainer:
    """Stand-in trainer: checkpoints are seeded pseudo-random tensors keyed
    by (user_id, stage), so the ensemble math downstream is fully testable."""

    trainer_id = "mock"

    def train(self, processed: list[Image], cfg: TrainingConfig) -> list[LoraCheckpoint]:
        out = []
        for stage in range(cfg.stages):
            seed = splitmix64(fnv1a64(cfg.user_id) ^ splitmix64(stage))
            stream = SplitMixStream(seed)
            tensors = {
                key: stream.fill(shape) for key, shape in sorted(MOCK_TENSOR_SHAPES.items())
            }
            out.append(LoraCheckpoint(
                checkpoint_id=f"{cfg.user_id}-stage{stage}",
                stage=stage,
                tensors=tensors,
            ))
        return out


def train_lora(processed: list[Image], cfg: TrainingConfig,
               trainer: TrainerBackend | None = None) -> list[LoraCheckpoint]:
    """Run the staged trainer; checkpoints come back with ascending stage."""
    if not processed:
        raise TrainerFailure("no processed images to train on")
    trainer = trainer or MockTrainer()
    try:
        checkpoints = trainer.train(processed, cfg)
    except TrainerFailure:
        raise
    except Exception as exc:
        raise TrainerFailure(f"trainer {trainer.trainer_id} failed: {exc}") from exc
    if len(checkpoints) != cfg.stages:
        raise TrainerFailure(
            f"trainer returned {len(checkpoints)} checkpoints, expected {cfg.stages}"
        )
    return sorted(checkpoints, key=lambda c: c.stage)


def validation_seed(user_id: str, template_index: int) -> int:
    """Seed per (user, template) only: every checkpoint generates under the
    same noise, so scores compare checkpoint quality and nothing else."""
    return splitmix64(fnv1a64(f"validate:{user_id}:{template_index}"))


def reference_embeddings(references: list[Image],
                         adapters: AdapterRegistry | None = None) -> list[FaceEmbedding]:
    """Embed each reference over its full extent (references are face crops)."""
    adapters = adapters or AdapterRegistry()
    out = []
    for img in references:
        try:
            out.append(adapters.embedder.embed(img, BBox(0, 0, img.w, img.h)))
        except DegenerateCrop:
            log.warning("constant reference image skipped for scoring")
    return out


def validate_checkpoints(checkpoints: list[LoraCheckpoint], cfg: TrainingConfig,
                         reference_images: list[Image],
                         adapters: AdapterRegistry | None = None,
                         backend: DiffusionBackend | None = None,
                         progress: Callable[[int, int], None] | None = None) -> ValidationReport:
    """Generate checkpoint x template validation images and score identity.

    Each cell inpaints the template's calibrated face mask guided by an
    edge unit built from that template, with the single checkpoint as the
    active adapter; the score is the best cosine similarity against the
    reference embeddings. Failed cells score -1 and are flagged.
    """
    if not checkpoints:
        raise ValueError("no checkpoints to validate")
    if not cfg.validation_templates:
        raise ValueError("no validation templates configured")
    adapters = adapters or AdapterRegistry()
    backend = backend or MockBackend()

    refs = reference_embeddings(reference_images, adapters)
    template_info = []
    for template in cfg.validation_templates:
        dets = adapters.detector.detect(template)
        if not dets:
            raise NoFacesFound("validation template has no detectable face")
        face = max(dets, key=lambda d: d.bbox.area())
        mask = calibrate_face_mask(face.landmarks, face.bbox, template.h, template.w,
                                   cfg.ear_expand_ratio)
        edge = ControlUnit("canny", canny_reference(template), 1.0)
        template_info.append((template, face, mask, edge))

    scores: list[list[float]] = []
    images: list[list[Image | None]] = []
    flagged: list[list[bool]] = []
    total = len(checkpoints) * len(template_info)
    done = 0
    for ck in checkpoints:
        row_scores: list[float] = []
        row_images: list[Image | None] = []
        row_flags: list[bool] = []
        single = merge_lora([ck], [1.0])
        for t_idx, (template, face, mask, edge) in enumerate(template_info):
            try:
                req = InpaintRequest(
                    image=template, mask=mask, prompt=cfg.prompt,
                    controls=[edge], lora=single,
                    denoise_strength=FIRST_STAGE_STRENGTH, steps=FIRST_STAGE_STEPS,
                    seed=validation_seed(cfg.user_id, t_idx),
                )
                generated = backend.inpaint(req)
                emb = adapters.embedder.embed(generated, face.bbox)
                score = max((_cos(emb, r) for r in refs), default=0.0)
                row_scores.append(score)
                row_images.append(generated)
                row_flags.append(False)
            except Exception as exc:  # failed cell: scored -1 and flagged
                log.warning("validation cell stage=%d template=%d failed: %s",
                            ck.stage, t_idx, exc)
                row_scores.append(-1.0)
                row_images.append(None)
                row_flags.append(True)
            done += 1
            if progress is not None:
                progress(done, total)
        scores.append(row_scores)
        images.append(row_images)
        flagged.append(row_flags)

    best = _argmax_cell(scores)
    return ValidationReport(
        checkpoint_ids=[c.checkpoint_id for c in checkpoints],
        stages=[c.stage for c in checkpoints],
        scores=scores,
        images=images,
        flagged=flagged,
        best_stage_index=best[0],
        best_template_index=best[1],
        best_score=scores[best[0]][best[1]],
    )


def _cos(a: FaceEmbedding, b: FaceEmbedding) -> float:
    from .adapters import face_similarity

    return face_similarity(a, b)


def _argmax_cell(scores: list[list[float]]) -> tuple[int, int]:
    """Global max; ties break to the lower stage index, then lower template."""
    best = (0, 0)
    best_score = -np.inf
    for i, row in enumerate(scores):
        for j, s in enumerate(row):
            if s > best_score:
                best = (i, j)
                best_score = s
    return best


def ensemble_merge(report: ValidationReport, checkpoints: list[LoraCheckpoint],
                   top_k: int) -> MergedLora:
    """Merge the top_k checkpoints by mean score, weighted by score share."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    means = report.mean_scores()
    if len(means) != len(checkpoints):
        raise ValueError("report does not match the checkpoint list")
    order = sorted(range(len(checkpoints)), key=lambda i: (-means[i], checkpoints[i].stage))
    chosen = order[:top_k]
    selected = [checkpoints[i] for i in chosen]
    weights = [max(means[i], 1e-6) for i in chosen]
    return merge_lora(selected, weights)


def select_face_id_image(report: ValidationReport) -> Image:
    """The validation image with the single best identity score."""
    if not report.scores or not report.scores[0]:
        raise EmptyReport("validation report has no cells")
    img = report.images[report.best_stage_index][report.best_template_index]
    if img is None:
        # the argmax cell failed; fall back to the best cell with an image
        candidates = [
            (-report.scores[i][j], i, j)
            for i in range(len(report.images))
            for j in range(len(report.images[i]))
            if report.images[i][j] is not None
        ]
        if not candidates:
            raise EmptyReport("no validation image was generated")
        _, i, j = min(candidates)
        img = report.images[i][j]
    return img


def identity_reward(generated: Image, references: list[FaceEmbedding],
                    adapters: AdapterRegistry | None = None) -> float:
    """Best cosine similarity of the generated face against the references.

    Images with no detectable face (or a degenerate crop) score -1, which
    penalizes non-faces when this is used as an RL reward.
    """
    if not references:
        raise ValueError("need at least one reference embedding")
    adapters = adapters or AdapterRegistry()
    dets = adapters.detector.detect(generated)
    if not dets:
        return -1.0
    face = max(dets, key=lambda d: d.bbox.area())
    try:
        emb = adapters.embedder.embed(generated, face.bbox)
    except DegenerateCrop:
        return -1.0
    return max(_cos(emb, r) for r in references)


def make_reward_fn(references: list[FaceEmbedding],
                   adapters: AdapterRegistry | None = None) -> Callable[[Image], float]:
    """Reward callback for an external policy-gradient trainer."""
    adapters = adapters or AdapterRegistry()

    def reward(img: Image) -> float:
        return identity_reward(img, references, adapters)

    return reward

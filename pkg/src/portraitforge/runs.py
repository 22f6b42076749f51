"""Training-run orchestration over a per-user directory.

Layout under a user directory:

    raw/NNNN.png        uploaded photos (ordinal order defines the roop image)
    processed/NNNN.png  cleaned 512x512 face crops
    lora/               staged checkpoints (checkpoint-<stage>.json + tensors)
    validation/         val-<stage>-<template>.png
    report.json         validation scores and the best cell
    face_id.png         best-scoring validation image
    face_id.json        landmarks/bbox metadata for alignment at inference
    ensemble/           merged adapter (merged.json + tensors)
    manifest.json       user profile consumed by the service and CLI
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import assets
from .adapters import AdapterRegistry
from .backend import DiffusionBackend, MockBackend
from .errors import NotEnoughImages, UserNotTrained
from .geometry import BBox, Image, LandmarkSet
from .lora import MergedLora, load_merged, save_checkpoint, save_merged
from .pngio import load_image, save_png
from .training import (
    PreprocessResult,
    TrainingConfig,
    ValidationReport,
    ensemble_merge,
    preprocess_training_images,
    select_face_id_image,
    train_lora,
    validate_checkpoints,
)

log = logging.getLogger(__name__)

ProgressFn = Callable[[str, float], None]


@dataclass
class RunResult:
    user_id: str
    processed_count: int
    skipped: list[tuple[int, str]]
    report: ValidationReport
    merged: MergedLora
    best_score: float
    report_path: Path
    face_id_path: Path


@dataclass
class UserBundle:
    """Everything inference needs for one trained user."""

    user_id: str
    merged: MergedLora
    face_id: Image
    face_id_landmarks: LandmarkSet
    face_id_bbox: BBox
    roop: Image


def _noop_progress(stage: str, fraction: float) -> None:
    return None


def list_raw_images(user_dir: Path) -> list[Path]:
    raw = user_dir / "raw"
    if not raw.is_dir():
        return []
    return sorted(p for p in raw.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))


def run_training(user_dir: str | Path, cfg: TrainingConfig,
                 backend: DiffusionBackend | None = None,
                 adapters: AdapterRegistry | None = None,
                 trainer=None,
                 progress: ProgressFn | None = None) -> RunResult:
    """Execute preprocess -> train -> validate -> merge over a user directory."""
    user_dir = Path(user_dir)
    backend = backend or MockBackend()
    adapters = adapters or AdapterRegistry()
    progress = progress or _noop_progress

    raw_paths = list_raw_images(user_dir)
    cfg.check_image_count(len(raw_paths))
    if not raw_paths:
        raise NotEnoughImages("user has no uploaded images")
    if not cfg.validation_templates:
        cfg.validation_templates = assets.load_all_templates()

    progress("preprocessing", 0.05)
    raws = [load_image(p) for p in raw_paths]
    pre: PreprocessResult = preprocess_training_images(raws, cfg, adapters)
    processed_dir = user_dir / "processed"
    processed_dir.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(pre.images):
        save_png(img, processed_dir / f"{i + 1:04d}.png")
    progress("preprocessing", 0.25)

    progress("training", 0.3)
    checkpoints = train_lora(pre.images, cfg, trainer)
    lora_dir = user_dir / "lora"
    lora_dir.mkdir(parents=True, exist_ok=True)
    for ck in checkpoints:
        save_checkpoint(lora_dir, ck)
    progress("training", 0.5)

    def cell_progress(done: int, total: int) -> None:
        progress("validating", 0.5 + 0.3 * done / total)

    report = validate_checkpoints(checkpoints, cfg, pre.images, adapters, backend,
                                  progress=cell_progress)
    validation_dir = user_dir / "validation"
    validation_dir.mkdir(parents=True, exist_ok=True)
    for ci, stage in enumerate(report.stages):
        for ti, img in enumerate(report.images[ci]):
            if img is not None:
                save_png(img, validation_dir / f"val-{stage}-{ti}.png")
    report_path = user_dir / "report.json"
    report_path.write_text(json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")

    progress("merging", 0.85)
    merged = ensemble_merge(report, checkpoints, cfg.top_k)
    save_merged(user_dir / "ensemble", merged)

    face_id = select_face_id_image(report)
    face_id_path = user_dir / "face_id.png"
    save_png(face_id, face_id_path)

    # the generated face sits exactly at the winning template's face region,
    # so its landmarks are the template's (honest inpainting destroys the
    # fiducial markers, re-detection on face_id.png is not an option here)
    template = cfg.validation_templates[report.best_template_index]
    dets = adapters.detector.detect(template)
    face = max(dets, key=lambda d: d.bbox.area())
    face_meta = {
        "v": 1,
        "landmarks": face.landmarks.as_array().tolist(),
        "bbox": [face.bbox.x0, face.bbox.y0, face.bbox.x1, face.bbox.y1],
        "stage": report.stages[report.best_stage_index],
        "template": report.best_template_index,
        "score": float(report.best_score),
    }
    (user_dir / "face_id.json").write_text(
        json.dumps(face_meta, indent=2, sort_keys=True) + "\n")

    manifest = {
        "v": 1,
        "manifest_version": 1,
        "user_id": cfg.user_id,
        "image_count": len(raw_paths),
        "trained": True,
        "ensemble": "ensemble",
        "face_id": "face_id.png",
        "roop": raw_paths[0].relative_to(user_dir).as_posix(),
        "best_score": float(report.best_score),
        "skipped": [[i, reason] for i, reason in pre.skipped],
    }
    (user_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    progress("merging", 0.95)

    return RunResult(
        user_id=cfg.user_id,
        processed_count=len(pre.images),
        skipped=pre.skipped,
        report=report,
        merged=merged,
        best_score=float(report.best_score),
        report_path=report_path,
        face_id_path=face_id_path,
    )


def load_user_bundle(user_dir: str | Path) -> UserBundle:
    """Load the trained artifacts for generation; raises UserNotTrained when
    the manifest or any referenced artifact is missing."""
    user_dir = Path(user_dir)
    manifest_path = user_dir / "manifest.json"
    if not manifest_path.is_file():
        raise UserNotTrained(f"no manifest under {user_dir}")
    manifest = json.loads(manifest_path.read_text())
    if not manifest.get("trained"):
        raise UserNotTrained(f"user {manifest.get('user_id')} is not trained")
    ensemble_dir = user_dir / manifest["ensemble"]
    face_id_path = user_dir / manifest["face_id"]
    roop_path = user_dir / manifest["roop"]
    meta_path = user_dir / "face_id.json"
    for p in (ensemble_dir / "merged.json", face_id_path, roop_path, meta_path):
        if not p.exists():
            raise UserNotTrained(f"trained artifact missing: {p}")
    meta = json.loads(meta_path.read_text())
    return UserBundle(
        user_id=manifest["user_id"],
        merged=load_merged(ensemble_dir),
        face_id=load_image(face_id_path),
        face_id_landmarks=LandmarkSet.from_array(meta["landmarks"]),
        face_id_bbox=BBox(*[float(v) for v in meta["bbox"]]),
        roop=load_image(roop_path),
    )

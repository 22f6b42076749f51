"""Filesystem registry: users, templates, jobs, tasks, results.

Persistence is a documented directory layout with JSON manifests. Every
record write is atomic (temp file + rename), state machines only move
forward (any state may fail), and startup recovery marks every record
that was in flight during a crash as failed/interrupted.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import uuid
from pathlib import Path

from .. import assets
from ..errors import TemplateNotFound, TooManyImages, UndecodableImage
from ..pngio import decode_image, encode_png
from ..training import MAX_TRAINING_IMAGES

log = logging.getLogger(__name__)

JOB_STATES = ("queued", "preprocessing", "training", "validating", "merging",
              "done", "failed")
TASK_STATES = ("queued", "preparing", "stage1", "stage2", "merging",
               "postprocess", "done", "failed")
TERMINAL = ("done", "failed")


def atomic_write_json(path: Path, obj: dict) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}-{threading.get_ident()}")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _advance(record: dict, states: tuple[str, ...], new_state: str) -> bool:
    """Forward-only transition; returns False when the move would go
    backward (callers treat that as a no-op, the record never regresses)."""
    if new_state not in states:
        raise ValueError(f"unknown state {new_state!r}")
    cur = states.index(record["state"])
    if record["state"] in TERMINAL:
        return False
    if new_state == "failed":
        record["state"] = "failed"
        return True
    new = states.index(new_state)
    if new <= cur:
        return False
    record["state"] = new_state
    return True


class Store:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        for sub in ("users", "templates", "jobs", "tasks", "results"):
            (self.data_dir / sub).mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.seed_templates()

    def _record_lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            if key not in self._locks:
                self._locks[key] = threading.Lock()
            return self._locks[key]

    # -- templates ----------------------------------------------------------

    def seed_templates(self) -> None:
        """Copy the packaged portraits in on first run so the gallery and
        validation work out of the box."""
        tdir = self.data_dir / "templates"
        if any(tdir.glob("*.png")):
            return
        for name in assets.list_template_names():
            (tdir / name).write_bytes(
                (assets.template_dir() / name).read_bytes())

    def list_templates(self) -> list[dict]:
        """Listing includes the detected face count so clients can gate
        user selection before submitting."""
        from ..adapters import detect_faces

        out = []
        for p in sorted((self.data_dir / "templates").glob("*.png")):
            img = decode_image(p.read_bytes())
            out.append({
                "id": p.name, "height": img.h, "width": img.w,
                "faces": len(detect_faces(img)),
            })
        return out

    def template_path(self, template_id: str) -> Path:
        safe = Path(template_id).name
        path = self.data_dir / "templates" / safe
        if not path.is_file():
            raise TemplateNotFound(template_id)
        return path

    # -- users --------------------------------------------------------------

    def user_dir(self, user_id: str) -> Path:
        safe = user_id.strip()
        if not safe or any(c in safe for c in "/\\") or safe in (".", ".."):
            raise ValueError(f"invalid user id {user_id!r}")
        return self.data_dir / "users" / safe

    def list_users(self) -> list[str]:
        root = self.data_dir / "users"
        return sorted(p.name for p in root.iterdir() if p.is_dir())

    def count_raw(self, user_id: str) -> int:
        raw = self.user_dir(user_id) / "raw"
        if not raw.is_dir():
            return 0
        return len([p for p in raw.iterdir() if p.suffix.lower() == ".png"])

    def store_images(self, user_id: str, blobs: list[bytes],
                     force: bool = False) -> int:
        """Decode-all-or-nothing batch append with zero-padded ordinals."""
        decoded = []
        for i, blob in enumerate(blobs):
            try:
                decoded.append(decode_image(blob))
            except UndecodableImage as exc:
                raise UndecodableImage(f"file {i + 1}: {exc}") from exc
        with self._record_lock(f"user:{user_id}"):
            current = self.count_raw(user_id)
            if not force and current + len(decoded) > MAX_TRAINING_IMAGES:
                raise TooManyImages(
                    f"{current + len(decoded)} images would exceed the "
                    f"{MAX_TRAINING_IMAGES} per-user maximum")
            raw = self.user_dir(user_id) / "raw"
            raw.mkdir(parents=True, exist_ok=True)
            for offset, img in enumerate(decoded):
                (raw / f"{current + offset + 1:04d}.png").write_bytes(encode_png(img))
        return len(decoded)

    def user_profile(self, user_id: str) -> dict:
        """Profile with on-read artifact verification: a trained flag whose
        artifacts are missing self-heals to untrained with a warning."""
        udir = self.user_dir(user_id)
        if not udir.is_dir():
            raise KeyError(user_id)
        manifest_path = udir / "manifest.json"
        manifest = {}
        if manifest_path.is_file():
            manifest = json.loads(manifest_path.read_text())
        trained = bool(manifest.get("trained"))
        warning = None
        if trained:
            required = [
                udir / manifest.get("ensemble", "ensemble") / "merged.json",
                udir / manifest.get("face_id", "face_id.png"),
                udir / "face_id.json",
            ]
            missing = [str(p.name) for p in required if not p.exists()]
            if missing:
                trained = False
                warning = f"trained artifacts missing: {', '.join(missing)}"
                manifest["trained"] = False
                atomic_write_json(manifest_path, manifest)
                log.warning("user %s: %s; profile healed to untrained",
                            user_id, warning)
        profile = {
            "v": 1,
            "user_id": user_id,
            "image_count": self.count_raw(user_id),
            "trained": trained,
            "best_score": manifest.get("best_score"),
            "manifest_version": manifest.get("manifest_version", 0),
        }
        if warning:
            profile["warning"] = warning
        return profile

    # -- jobs ---------------------------------------------------------------

    def _job_path(self, job_id: str) -> Path:
        return self.data_dir / "jobs" / f"{Path(job_id).name}.json"

    def create_job(self, user_id: str) -> dict:
        job = {
            "v": 1,
            "job_id": str(uuid.uuid4()),
            "user_id": user_id,
            "state": "queued",
            "progress": 0.0,
            "message": "",
            "created": time.time(),
            "updated": time.time(),
        }
        atomic_write_json(self._job_path(job["job_id"]), job)
        return job

    def get_job(self, job_id: str) -> dict:
        path = self._job_path(job_id)
        if not path.is_file():
            raise KeyError(job_id)
        return json.loads(path.read_text())

    def update_job(self, job_id: str, state: str | None = None,
                   progress: float | None = None,
                   message: str | None = None) -> dict:
        with self._record_lock(f"job:{job_id}"):
            job = self.get_job(job_id)
            if state is not None:
                _advance(job, JOB_STATES, state)
            if progress is not None:
                job["progress"] = min(1.0, max(job["progress"], float(progress)))
            if message is not None:
                job["message"] = message
            if job["state"] == "done":
                job["progress"] = 1.0
            job["updated"] = time.time()
            atomic_write_json(self._job_path(job_id), job)
            return job

    def active_job_for(self, user_id: str) -> dict | None:
        for p in (self.data_dir / "jobs").glob("*.json"):
            job = json.loads(p.read_text())
            if job["user_id"] == user_id and job["state"] not in TERMINAL:
                return job
        return None

    # -- tasks --------------------------------------------------------------

    def _task_path(self, task_id: str) -> Path:
        return self.data_dir / "tasks" / f"{Path(task_id).name}.json"

    def create_task(self, template_id: str, user_ids: list[str],
                    options: dict) -> dict:
        task = {
            "v": 1,
            "task_id": str(uuid.uuid4()),
            "template_id": template_id,
            "user_ids": list(user_ids),
            "options": options,
            "state": "queued",
            "message": "",
            "result": None,
            "created": time.time(),
            "updated": time.time(),
        }
        atomic_write_json(self._task_path(task["task_id"]), task)
        return task

    def get_task(self, task_id: str) -> dict:
        path = self._task_path(task_id)
        if not path.is_file():
            raise KeyError(task_id)
        return json.loads(path.read_text())

    def update_task(self, task_id: str, state: str | None = None,
                    message: str | None = None,
                    result: str | None = None) -> dict:
        with self._record_lock(f"task:{task_id}"):
            task = self.get_task(task_id)
            if state is not None:
                _advance(task, TASK_STATES, state)
            if message is not None:
                task["message"] = message
            if result is not None:
                task["result"] = result
            if task["state"] != "done":
                task["result"] = None  # result ref is set iff the task is done
            task["updated"] = time.time()
            atomic_write_json(self._task_path(task_id), task)
            return task

    def result_dir(self, task_id: str) -> Path:
        d = self.data_dir / "results" / Path(task_id).name
        d.mkdir(parents=True, exist_ok=True)
        return d

    # -- recovery -----------------------------------------------------------

    def recover(self) -> int:
        """Mark records that were in flight during a crash as interrupted.
        Queued records that never started are failed too: their worker is
        gone (a graceful drain leaves them queued only until restart)."""
        healed = 0
        for p in (self.data_dir / "jobs").glob("*.json"):
            job = json.loads(p.read_text())
            if job["state"] not in TERMINAL:
                job["state"] = "failed"
                job["message"] = "interrupted"
                job["updated"] = time.time()
                atomic_write_json(p, job)
                healed += 1
        for p in (self.data_dir / "tasks").glob("*.json"):
            task = json.loads(p.read_text())
            if task["state"] not in TERMINAL:
                task["state"] = "failed"
                task["message"] = "interrupted"
                task["result"] = None
                task["updated"] = time.time()
                atomic_write_json(p, task)
                healed += 1
        return healed

"""Single-process worker pool driving training jobs and generation tasks.

HTTP handlers only read records; every mutation funnels through the
store's per-record lock. Training is exclusive per user; generation
concurrency equals the configured worker count. A drain request lets
in-flight work finish its current stage and leaves queued items queued.
"""

from __future__ import annotations

import base64
import logging
import queue
import threading

from ..adapters import AdapterRegistry
from ..backend import DiffusionBackend, make_backend
from ..errors import (
    JobAlreadyRunning,
    NotEnoughImages,
    PortraitForgeError,
    UserCountMismatch,
    UserNotTrained,
)
from ..inference import GenerationOptions, generate_group, generate_portrait
from ..pngio import decode_image, load_image, save_png
from ..runs import load_user_bundle, run_training
from ..training import MIN_TRAINING_IMAGES, TrainingConfig
from .store import Store, atomic_write_json

log = logging.getLogger(__name__)

_JOB_STATE_FOR_PHASE = {
    "preprocessing": "preprocessing",
    "training": "training",
    "validating": "validating",
    "merging": "merging",
}


class WorkerPool:
    def __init__(self, store: Store, backend: DiffusionBackend | str = "mock",
                 adapters: AdapterRegistry | None = None, workers: int = 2):
        self.store = store
        self.backend = make_backend(backend) if isinstance(backend, str) else backend
        self.adapters = adapters or AdapterRegistry()
        self._queue: queue.Queue = queue.Queue()
        self._draining = threading.Event()
        self._active_users: set[str] = set()
        self._active_lock = threading.Lock()
        self._threads = [
            threading.Thread(target=self._worker_loop, name=f"pf-worker-{i}", daemon=True)
            for i in range(max(1, workers))
        ]
        for t in self._threads:
            t.start()

    # -- submission ----------------------------------------------------------

    def submit_training(self, user_id: str, overrides: dict | None = None) -> str:
        overrides = overrides or {}
        count = self.store.count_raw(user_id)
        force = bool(overrides.get("force"))
        if not force and count < MIN_TRAINING_IMAGES:
            raise NotEnoughImages(
                f"user {user_id} has {count} images; need at least "
                f"{MIN_TRAINING_IMAGES}")
        with self._active_lock:
            if user_id in self._active_users or \
                    self.store.active_job_for(user_id) is not None:
                raise JobAlreadyRunning(f"a training job for {user_id} is active")
            job = self.store.create_job(user_id)
            self._active_users.add(user_id)
        self._queue.put(("job", job["job_id"], overrides))
        return job["job_id"]

    def submit_generation(self, template_id: str | None, template_b64: str | None,
                          user_ids: list[str], options: dict) -> str:
        if not user_ids:
            raise UserCountMismatch("at least one user id is required")
        for uid in user_ids:
            try:
                profile = self.store.user_profile(uid)
            except KeyError:
                raise UserNotTrained(f"unknown user {uid}") from None
            if not profile["trained"]:
                raise UserNotTrained(f"user {uid} is not trained")
        opts = _parse_options(options)

        if template_b64 is not None:
            template = decode_image(base64.b64decode(template_b64))
            template_ref = "inline"
        else:
            template = load_image(self.store.template_path(template_id))
            template_ref = template_id
        faces = self.adapters.detector.detect(template)
        if len(faces) != len(user_ids):
            raise UserCountMismatch(
                f"{len(user_ids)} users for {len(faces)} detected faces")

        task = self.store.create_task(template_ref, user_ids, options)
        result_dir = self.store.result_dir(task["task_id"])
        save_png(template, result_dir / "template.png")
        self._queue.put(("task", task["task_id"], None))
        return task["task_id"]

    # -- worker loop ---------------------------------------------------------

    def _worker_loop(self) -> None:
        while True:
            if self._draining.is_set():
                return
            try:
                kind, ident, payload = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            if self._draining.is_set():
                # drop the in-memory item; its record stays queued on disk
                self._queue.task_done()
                return
            try:
                if kind == "job":
                    self._run_job(ident, payload or {})
                else:
                    self._run_task(ident)
            except Exception:
                log.exception("worker crashed on %s %s", kind, ident)
            finally:
                self._queue.task_done()

    def _run_job(self, job_id: str, overrides: dict) -> None:
        job = self.store.get_job(job_id)
        user_id = job["user_id"]
        try:
            cfg = TrainingConfig(
                user_id=user_id,
                stages=int(overrides.get("stages", 4)),
                top_k=int(overrides.get("top_k", 2)),
                allow_any_count=bool(overrides.get("force", False)),
            )

            def progress(phase: str, fraction: float) -> None:
                self.store.update_job(
                    job_id, state=_JOB_STATE_FOR_PHASE.get(phase),
                    progress=fraction, message=phase)

            result = run_training(self.store.user_dir(user_id), cfg,
                                  backend=self.backend, adapters=self.adapters,
                                  progress=progress)
            self.store.update_job(
                job_id, state="done", progress=1.0,
                message=f"best face-id score {result.best_score:.4f}")
        except Exception as exc:
            log.warning("training job %s failed: %s", job_id, exc)
            self.store.update_job(job_id, state="failed", message=str(exc))
        finally:
            with self._active_lock:
                self._active_users.discard(user_id)

    def _run_task(self, task_id: str) -> None:
        task = self.store.get_task(task_id)
        try:
            result_dir = self.store.result_dir(task_id)
            template = load_image(result_dir / "template.png")
            bundles = [
                load_user_bundle(self.store.user_dir(uid))
                for uid in task["user_ids"]
            ]
            opts = _parse_options(task["options"])
            self.store.update_task(task_id, state="preparing")
            if len(bundles) == 1:
                self.store.update_task(task_id, state="stage1")
                result = generate_portrait(template, bundles[0], opts,
                                           backend=self.backend,
                                           adapters=self.adapters,
                                           template_ref=task["template_id"])
                self.store.update_task(task_id, state="postprocess")
            else:
                self.store.update_task(task_id, state="stage1")
                result = generate_group(template, bundles, opts,
                                        backend=self.backend,
                                        adapters=self.adapters,
                                        template_ref=task["template_id"])
                self.store.update_task(task_id, state="merging")
                self.store.update_task(task_id, state="postprocess")
            save_png(result.image, result_dir / "image.png")
            atomic_write_json(result_dir / "provenance.json", result.provenance)
            self.store.update_task(
                task_id, state="done",
                result=f"results/{task_id}/image.png")
        except Exception as exc:
            log.warning("generation task %s failed: %s", task_id, exc)
            self.store.update_task(task_id, state="failed", message=str(exc))

    # -- lifecycle -----------------------------------------------------------

    def drain(self, timeout: float = 600.0) -> None:
        """Let running work finish, leave queued items queued, stop threads."""
        self._draining.set()
        for t in self._threads:
            t.join(timeout=timeout)

    @property
    def draining(self) -> bool:
        return self._draining.is_set()


def _parse_options(options: dict) -> GenerationOptions:
    known = {}
    fields = {
        "seed": int,
        "mouth_refine": bool,
        "ear_expand_ratio": float,
        "first_strength": float,
        "first_steps": int,
        "second_strength": float,
        "second_steps": int,
        "ring_outer": int,
        "ring_inner": int,
        "style": str,
        "prompt": str,
        "negative_prompt": str,
    }
    for key, cast in fields.items():
        if key in options and options[key] is not None:
            known[key] = cast(options[key])
    if "control_weights" in options and options["control_weights"]:
        known["control_weights"] = {
            str(k): float(v) for k, v in options["control_weights"].items()
        }
    return GenerationOptions(**known)

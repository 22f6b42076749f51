"""REST surface over the store and worker pool.

All JSON payloads carry a top-level schema version "v": 1 and errors use
{"error": {"code", "message"}}. Handlers never block on pipeline work;
they read persisted records the workers maintain.
"""

from __future__ import annotations

import contextlib
import json
import logging
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .. import __version__, kernels
from ..errors import (
    JobAlreadyRunning,
    NotEnoughImages,
    PortraitForgeError,
    TemplateNotFound,
    TooManyImages,
    UndecodableImage,
    UserCountMismatch,
    UserNotTrained,
)
from .config import ServiceConfig
from .store import Store
from .workers import WorkerPool

log = logging.getLogger(__name__)

_STATUS_FOR = (
    (UndecodableImage, 400, "undecodable_image"),
    (TooManyImages, 409, "too_many_images"),
    (JobAlreadyRunning, 409, "job_already_running"),
    (NotEnoughImages, 422, "not_enough_images"),
    (UserNotTrained, 422, "user_not_trained"),
    (UserCountMismatch, 422, "user_count_mismatch"),
    (TemplateNotFound, 404, "template_not_found"),
)


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    store = Store(config.data_dir)
    recovered = store.recover()
    if recovered:
        log.warning("marked %d interrupted records as failed", recovered)

    from ..adapters import AdapterRegistry

    pool = WorkerPool(store, backend=config.backend,
                      adapters=AdapterRegistry(config.adapters),
                      workers=config.workers)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        # graceful drain: running stages finish, queued records stay queued
        pool.drain()

    app = FastAPI(title="portraitforge", version=__version__, lifespan=lifespan)
    app.state.store = store
    app.state.pool = pool
    app.state.config = config

    @app.exception_handler(PortraitForgeError)
    async def pf_error_handler(request: Request, exc: PortraitForgeError):
        for klass, status, code in _STATUS_FOR:
            if isinstance(exc, klass):
                return _error_response(status, code, str(exc))
        log.exception("unhandled pipeline error")
        return _error_response(500, "internal", str(exc))

    @app.exception_handler(404)
    async def notfound_handler(request: Request, exc):
        return _error_response(404, "not_found", "resource not found")

    from fastapi.exceptions import RequestValidationError

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(422, "invalid_request", str(exc.errors()[:3]))

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return _error_response(422, "invalid_request", str(exc))

    @app.middleware("http")
    async def auth_middleware(request: Request, call_next):
        token = config.api_token
        if token and request.url.path.startswith("/api/"):
            supplied = request.headers.get("x-api-token", "")
            auth = request.headers.get("authorization", "")
            if auth.startswith("Bearer "):
                supplied = supplied or auth[len("Bearer "):]
            if supplied != token:
                return _error_response(401, "unauthorized", "invalid API token")
        return await call_next(request)

    # -- meta ---------------------------------------------------------------

    @app.get("/api/v1/health")
    def health():
        return {"v": 1, "status": "ok", "backend": pool.backend.backend_id,
                "kernels": kernels.backend_name(), "version": __version__}

    # -- templates ----------------------------------------------------------

    @app.get("/api/v1/templates")
    def templates():
        return {"v": 1, "templates": store.list_templates()}

    @app.get("/templates/{template_id}")
    def template_image(template_id: str):
        return FileResponse(store.template_path(template_id), media_type="image/png")

    # -- users ---------------------------------------------------------------

    @app.get("/api/v1/users")
    def users():
        return {"v": 1, "users": [store.user_profile(u) for u in store.list_users()]}

    @app.get("/api/v1/users/{user_id}")
    def user(user_id: str):
        try:
            return store.user_profile(user_id)
        except KeyError:
            return _error_response(404, "unknown_user", f"no such user {user_id}")

    @app.get("/api/v1/users/{user_id}/face_id")
    def face_id(user_id: str):
        path = store.user_dir(user_id) / "face_id.png"
        if not path.is_file():
            return _error_response(404, "not_found", "user has no face_id image")
        return FileResponse(path, media_type="image/png")

    @app.post("/api/v1/users/{user_id}/images")
    async def upload(user_id: str, files: list[UploadFile], force: bool = False):
        blobs = [await f.read() for f in files]
        stored = store.store_images(user_id, blobs, force=force)
        return {"v": 1, "stored": stored, "total": store.count_raw(user_id)}

    @app.post("/api/v1/users/{user_id}/train")
    async def train(user_id: str, request: Request):
        overrides = {}
        body = await request.body()
        if body:
            overrides = json.loads(body)
        job_id = pool.submit_training(user_id, overrides)
        return {"v": 1, "job_id": job_id}

    # -- jobs / tasks ---------------------------------------------------------

    @app.get("/api/v1/jobs/{job_id}")
    def job(job_id: str):
        try:
            return store.get_job(job_id)
        except KeyError:
            return _error_response(404, "unknown_job", f"no such job {job_id}")

    @app.post("/api/v1/generate")
    async def generate(request: Request):
        body = json.loads(await request.body())
        task_id = pool.submit_generation(
            template_id=body.get("template_id"),
            template_b64=body.get("template_b64"),
            user_ids=body.get("user_ids", []),
            options=body.get("options", {}),
        )
        return {"v": 1, "task_id": task_id}

    @app.get("/api/v1/tasks/{task_id}")
    def task(task_id: str):
        try:
            return store.get_task(task_id)
        except KeyError:
            return _error_response(404, "unknown_task", f"no such task {task_id}")

    @app.get("/api/v1/results/{task_id}/image")
    def result_image(task_id: str):
        path = store.data_dir / "results" / Path(task_id).name / "image.png"
        if not path.is_file():
            return _error_response(404, "no_result", "task has no result image")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/v1/results/{task_id}/provenance")
    def result_provenance(task_id: str):
        path = store.data_dir / "results" / Path(task_id).name / "provenance.json"
        if not path.is_file():
            return _error_response(404, "no_result", "task has no provenance record")
        return Response(content=path.read_text(), media_type="application/json")

    # -- UI bundle -------------------------------------------------------------

    ui_dir = config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app

"""HTTP API over the data manager and the job registry."""

from __future__ import annotations

import contextlib
import logging
import signal
import threading

import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from alaas.data import DataManager
from alaas.errors import ALaaSError
from alaas.models import ALQuery
from alaas.server import schemas
from alaas.server.config import ServiceConfig
from alaas.server.jobs import JobManager
from alaas.serving import bind_socket

log = logging.getLogger(__name__)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"code": code, "message": message}, status_code=status)


def build_data_manager(config: ServiceConfig, **overrides) -> DataManager:
    d = config.data
    kwargs = dict(
        fetch_concurrency=d.fetch_concurrency,
        fetch_timeout=d.fetch_timeout_ms / 1000.0,
        s3_gateway_template=d.s3_gateway_template,
        cache_max_bytes=d.cache_max_bytes,
    )
    kwargs.update(overrides)
    return DataManager(d.data_dir, d.cache_dir, **kwargs)


def create_app(config: ServiceConfig, data: DataManager | None = None) -> FastAPI:
    """``data`` lets tests inject a DataManager (e.g. one with a counting fetcher)."""
    data = data or build_data_manager(config)
    al = config.active_learning

    def pipeline_spec(query: ALQuery):
        return config.pipeline.pipeline_spec(config.data.fetch_concurrency, query.batch_size)

    jobs = JobManager(data, config.infer.backend_spec(), pipeline_spec, config.server.workers)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        jobs.start()
        try:
            yield
        finally:
            jobs.shutdown()
            data.flush()

    app = FastAPI(title="alaas", version=config.version, lifespan=lifespan)
    app.state.config = config
    app.state.data = data
    app.state.jobs = jobs

    @app.exception_handler(ALaaSError)
    async def _alaas_error(request: Request, exc: ALaaSError):
        return _error(exc.http_status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def _invalid(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return _error(400, "InvalidRequest", f"{where}: {first.get('msg', 'invalid request')}")

    @app.exception_handler(StarletteHTTPException)
    async def _http(request: Request, exc: StarletteHTTPException):
        code = {404: "NotFound", 405: "MethodNotAllowed"}.get(exc.status_code, "HTTPError")
        return _error(exc.status_code, code, str(exc.detail))

    @app.get("/v1/health", response_model=schemas.Health)
    def health():
        return {"status": "ok", "version": config.version}

    @app.post("/v1/datasets", status_code=201, response_model=schemas.DatasetCreated)
    def submit_dataset(body: schemas.DatasetCreate):
        manifest = data.ingest(body.uris, body.name, body.owner)
        return {"dataset_id": manifest.dataset_id, "size": len(manifest)}

    @app.get("/v1/datasets/{dataset_id}", response_model=schemas.Dataset)
    def get_dataset(dataset_id: str):
        return data.get_manifest(dataset_id).to_dict()

    @app.post("/v1/queries", status_code=202, response_model=schemas.QueryAccepted)
    def submit_query(body: schemas.QueryCreate):
        try:
            query = ALQuery(
                dataset_id=body.dataset_id,
                strategy=body.strategy or al.strategy,
                budget=body.budget if body.budget is not None else al.budget,
                batch_size=body.batch_size or al.batch_size,
                seed=body.seed,
                labeled_ids=tuple(body.labeled_ids),
                beta=body.beta or al.dbal_beta,
            )
        except ValueError as exc:
            return _error(400, "InvalidRequest", str(exc))
        rec = jobs.submit(query)
        return {"job_id": rec.job_id, "state": rec.state}

    @app.get("/v1/queries/{job_id}", response_model=schemas.Job)
    def get_job(job_id: str):
        return jobs.get(job_id).to_dict()

    @app.delete("/v1/queries/{job_id}", response_model=schemas.Job)
    def cancel_job(job_id: str):
        return jobs.cancel(job_id).to_dict()

    return app


def serve(config: ServiceConfig) -> int:
    """Run in the foreground until SIGINT/SIGTERM.  Raises BindFailed."""
    sock = bind_socket(config.server.host, config.server.port)
    app = create_app(config)
    server = uvicorn.Server(uvicorn.Config(app, log_level="info", lifespan="on", timeout_graceful_shutdown=30))
    log.info("serving on %s:%d", *sock.getsockname()[:2])
    # uvicorn re-raises the captured signal once shutdown completes; landing it
    # on a no-op handler lets a graceful stop exit with status 0
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, lambda *_: None)
    try:
        server.run(sockets=[sock])
    finally:
        sock.close()
    return 0

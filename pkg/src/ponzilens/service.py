"""HTTP façade over the analysis pipeline for the companion UI and scripts.

Jobs queue into a small worker pool (each analysis already parallelises
poorly enough at desk scale that one pipeline per worker is right); results
are immutable once done, so every read endpoint is safe under concurrency.
"""

from __future__ import annotations

import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .bytecode import Source, SourceKind, parse_hex
from .cfg import PathLimits
from .features import UnknownColumnNameError
from .pipeline import analyze, reorder_columns
from .report import load_schema
from .rpc import RpcFetchError, default_endpoint, fetch_bytecode

WORKERS_ENV = "PONZILENS_WORKERS"
UI_ORIGIN_ENV = "PONZILENS_UI_ORIGIN"


class JobStatus(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


@dataclass
class AnalysisJob:
    id: str
    status: JobStatus = JobStatus.QUEUED
    error: Optional[str] = None
    serialized: Optional[str] = None
    report: Optional[dict] = None

    def transition(self, new: JobStatus) -> None:
        allowed = {
            JobStatus.QUEUED: {JobStatus.RUNNING},
            JobStatus.RUNNING: {JobStatus.DONE, JobStatus.FAILED},
        }
        if new not in allowed.get(self.status, set()):
            raise RuntimeError(f"illegal job transition {self.status} -> {new}")
        self.status = new


class InputRef(BaseModel):
    kind: str = Field(pattern="^(inline|file|address)$")
    value: str
    endpoint: Optional[str] = None


class LimitsBody(BaseModel):
    max_paths: int = 4096
    max_blocks_per_path: int = 512


class AnalysisRequest(BaseModel):
    input: InputRef
    limits: Optional[LimitsBody] = None


class ColumnOrderBody(BaseModel):
    columns: list[str]


class JobTable:
    """Single-writer discipline: every mutation holds the lock."""

    def __init__(self):
        self._jobs: dict[str, AnalysisJob] = {}
        self._lock = threading.Lock()

    def create(self) -> AnalysisJob:
        job = AnalysisJob(id=uuid.uuid4().hex[:12])
        with self._lock:
            self._jobs[job.id] = job
        return job

    def get(self, job_id: str) -> Optional[AnalysisJob]:
        with self._lock:
            return self._jobs.get(job_id)

    def update(self, job_id: str, **fields) -> None:
        with self._lock:
            job = self._jobs[job_id]
            status = fields.pop("status", None)
            if status is not None:
                job.transition(status)
            for k, v in fields.items():
                setattr(job, k, v)


def create_app(*, workers: int | None = None) -> FastAPI:
    app = FastAPI(title="ponzilens", version="0.1.0")
    origin = os.environ.get(UI_ORIGIN_ENV, "*")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, 0)) or (os.cpu_count() or 2)
    pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="analysis")
    jobs = JobTable()
    app.state.jobs = jobs

    def run_job(job_id: str, req: AnalysisRequest) -> None:
        jobs.update(job_id, status=JobStatus.RUNNING)
        try:
            ref = req.input
            address = None
            if ref.kind == "inline":
                code = parse_hex(ref.value)
            elif ref.kind == "file":
                with open(ref.value) as fh:
                    code = parse_hex(fh.read(), Source(SourceKind.FILE, path=ref.value))
            else:
                endpoint = ref.endpoint or default_endpoint()
                if not endpoint:
                    raise ValueError("no RPC endpoint given and PONZILENS_RPC_URL unset")
                code = fetch_bytecode(ref.value, endpoint)
                address = ref.value.lower()
            limits = PathLimits(**(req.limits.model_dump() if req.limits else {}))
            result = analyze(code, limits, address=address)
            jobs.update(job_id, status=JobStatus.DONE,
                        serialized=result.serialized, report=result.report)
        except Exception as exc:  # job failures surface through status, not 500s
            jobs.update(job_id, status=JobStatus.FAILED, error=str(exc))

    @app.post("/analyses", status_code=202)
    def post_analysis(req: AnalysisRequest) -> dict:
        if req.input.kind == "address":
            from .rpc import _validate_address

            try:
                _validate_address(req.input.value)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        elif req.input.kind == "inline":
            try:
                parse_hex(req.input.value)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        try:
            if req.limits is not None:
                PathLimits(**req.limits.model_dump())
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        job = jobs.create()
        pool.submit(run_job, job.id, req)
        return {"id": job.id, "status": job.status.value}

    @app.get("/analyses/{job_id}")
    def get_analysis(job_id: str) -> dict:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        body = {"id": job.id, "status": job.status.value}
        if job.error:
            body["error"] = job.error
        return body

    @app.get("/analyses/{job_id}/report")
    def get_report(job_id: str) -> Response:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        if job.status is not JobStatus.DONE:
            raise HTTPException(status_code=409,
                                detail=f"report not ready: job is {job.status.value}")
        return Response(content=job.serialized, media_type="application/json")

    @app.post("/analyses/{job_id}/column-order")
    def post_column_order(job_id: str, body: ColumnOrderBody) -> JSONResponse:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        if job.status is not JobStatus.DONE:
            raise HTTPException(status_code=409,
                                detail=f"report not ready: job is {job.status.value}")
        try:
            feature_level = reorder_columns(job.report, body.columns)
        except UnknownColumnNameError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return JSONResponse(feature_level)

    @app.get("/schema")
    def get_schema() -> JSONResponse:
        return JSONResponse(load_schema())

    return app


def serve(bind: str = "127.0.0.1:8571") -> None:
    import uvicorn

    host, _, port = bind.rpartition(":")
    uvicorn.run(create_app(), host=host or "127.0.0.1", port=int(port))

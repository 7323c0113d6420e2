"""HTTP service: calf registry, uploads, prediction jobs, metrics, export.

All endpoints live under ``/api/v1``; the dashboard bundle (when present) is
served statically at ``/``.  Uploads and predictions run on a bounded worker
pool so request handling never blocks on inference; job state is queryable
at ``/jobs/{id}``.  Errors come back as JSON ``{code, message}`` with 4xx
for caller faults.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, Query, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import behaviour, model_io, pipeline
from .cwa import parse_csv, parse_cwa, regularize
from .errors import (
    BadRange,
    CalfWatchError,
    ModelMissing,
    NoData,
    ParseFailed,
    RecordingMissing,
    UnknownCalf,
    ValidationFailed,
)
from .forest import ForestModel
from .ridge import RidgeModel
from .store import Store
from .timeutil import parse_iso

MAX_UPLOAD_BYTES = 2 << 30          # 2 GiB

_STATUS = {
    ValidationFailed: 400, BadRange: 400, ParseFailed: 400,
    UnknownCalf: 404, RecordingMissing: 404, ModelMissing: 404, NoData: 404,
}


class CalfMeta(BaseModel):
    calf_id: str
    breed: str = ""
    birth_date: str = ""
    coat_colour: str = ""
    pen: str = ""


class PredictRequest(BaseModel):
    model1: str
    model2: str


def create_app(store_dir, tz: str = "UTC", workers: int | None = None,
               frontend_dir=None) -> FastAPI:
    store = Store(store_dir)
    pool = ThreadPoolExecutor(max_workers=workers or os.cpu_count() or 1)
    app = FastAPI(title="calfwatch", version="0.1.0")
    app.state.store = store
    app.state.pool = pool

    @app.exception_handler(CalfWatchError)
    async def _calfwatch_error(request: Request, exc: CalfWatchError):
        status = 500
        for klass, code in _STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(status_code=status,
                            content={"code": type(exc).__name__,
                                     "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": "ValidationFailed",
                                     "message": str(exc.errors())})

    # --- calves ---

    @app.post("/api/v1/calves")
    def register_calf(meta: CalfMeta):
        calf_id = store.register_calf(meta.model_dump())
        return {"calf_id": calf_id}

    @app.get("/api/v1/calves")
    def list_calves():
        return store.list_calves()

    @app.get("/api/v1/calves/{calf_id}")
    def get_calf(calf_id: str):
        return store.get_calf(calf_id)

    # --- recordings / jobs ---

    def _run_ingest(job_id: str, calf_id: str, filename: str, payload: bytes):
        store.update_job(job_id, "running")
        try:
            try:
                if filename.lower().endswith(".cwa"):
                    rec = parse_cwa(payload)
                else:
                    rec = parse_csv(payload.decode("utf-8", errors="strict"))
            except (CalfWatchError, UnicodeDecodeError) as exc:
                raise ParseFailed(f"{type(exc).__name__}: {exc}") from exc
            rec = regularize(rec)
            rec_id = store.save_recording(calf_id, rec)
            store.update_job(job_id, "done",
                             result={"recording_id": rec_id,
                                     "n_samples": int(len(rec))})
        except Exception as exc:  # a failed job carries its error detail
            store.update_job(job_id, "failed", error=f"{type(exc).__name__}: {exc}")

    @app.post("/api/v1/calves/{calf_id}/recordings")
    async def upload_recording(calf_id: str, file: UploadFile):
        store.get_calf(calf_id)
        payload = await file.read()
        if len(payload) > MAX_UPLOAD_BYTES:
            raise ValidationFailed(f"upload exceeds {MAX_UPLOAD_BYTES} bytes")
        job = store.create_job("convert")
        pool.submit(_run_ingest, job["job_id"], calf_id,
                    file.filename or "upload.cwa", payload)
        return {"job_id": job["job_id"]}

    @app.get("/api/v1/jobs/{job_id}")
    def get_job(job_id: str):
        return store.get_job(job_id)

    def _run_predict(job_id: str, rec_id: str, model1_name: str, model2_name: str):
        store.update_job(job_id, "running")
        try:
            model1 = model_io.load_model(store.model_path(model1_name).read_bytes())
            model2 = model_io.load_model(store.model_path(model2_name).read_bytes())
            if not isinstance(model1, ForestModel) or not isinstance(model2, RidgeModel):
                raise ModelMissing("model1 must be a forest artifact and model2 a ridge artifact")
            entry = store.recording_entry(rec_id)
            rec = store.load_recording(rec_id)
            tl = pipeline.predict_recording(rec, model1, model2,
                                            calf_id=entry["calf_id"])
            tl.model_versions.update({"model1_ref": model1_name,
                                      "model2_ref": model2_name})
            store.save_timeline(rec_id, tl)
            store.update_job(job_id, "done",
                             result={"recording_id": rec_id,
                                     "n_windows": int(len(tl))})
        except Exception as exc:
            store.update_job(job_id, "failed", error=f"{type(exc).__name__}: {exc}")

    @app.post("/api/v1/recordings/{rec_id}/predict")
    def run_prediction(rec_id: str, req: PredictRequest):
        store.recording_entry(rec_id)
        store.model_path(req.model1)
        store.model_path(req.model2)
        job = store.create_job("predict")
        pool.submit(_run_predict, job["job_id"], rec_id, req.model1, req.model2)
        return {"job_id": job["job_id"]}

    # --- metrics / export ---

    def _parse_range(from_iso: str, to_iso: str):
        try:
            return parse_iso(from_iso), parse_iso(to_iso)
        except ValueError as exc:
            raise BadRange(f"bad range timestamp: {exc}") from exc

    @app.get("/api/v1/calves/{calf_id}/metrics")
    def query_metrics(calf_id: str,
                      from_iso: str = Query(alias="from"),
                      to_iso: str = Query(alias="to"),
                      granularity: str = "hour"):
        tl = store.calf_timeline(calf_id)
        from_ms, to_ms = _parse_range(from_iso, to_iso)
        return behaviour.metrics_json(tl, from_ms, to_ms, granularity, tz=tz)

    @app.get("/api/v1/calves/{calf_id}/predictions.csv")
    def export_predictions(calf_id: str,
                           from_iso: str = Query(alias="from"),
                           to_iso: str = Query(alias="to")):
        tl = store.calf_timeline(calf_id)
        from_ms, to_ms = _parse_range(from_iso, to_iso)
        rows = list(behaviour.predictions_csv_rows(tl, from_ms, to_ms))
        if len(rows) <= 1:
            raise NoData(f"no classified samples for {calf_id} in range")
        return PlainTextResponse("\n".join(rows) + "\n", media_type="text/csv")

    @app.get("/api/v1/models")
    def list_models():
        return store.list_models()

    @app.get("/api/v1/config")
    def get_config():
        return {"timezone": tz}

    if frontend_dir and Path(frontend_dir).exists():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="dashboard")
    else:
        @app.get("/")
        def index():
            return {"service": "calfwatch", "api": "/api/v1"}

    return app

"""FastAPI application wrapping the forecasting toolkit."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..configio import ConfigError
from ..dataset import DataError
from ..metrics import MetricShapeError, UndefinedMetricError
from ..optimizers import ALGORITHMS
from ..presets import PRESETS
from . import handlers, schemas
from .jobs import JobRegistry


def create_app() -> FastAPI:
    app = FastAPI(
        title="demandcast",
        version=__version__,
        description="Monthly electricity demand forecasting with classical and "
        "autoencoder-deepened feed-forward networks.",
    )
    registry = JobRegistry()
    app.state.jobs = registry

    @app.exception_handler(DataError)
    async def data_error(_, exc: DataError):
        return JSONResponse(
            status_code=400, content={"kind": type(exc).__name__, "detail": str(exc)}
        )

    @app.exception_handler(ConfigError)
    async def config_error(_, exc: ConfigError):
        return JSONResponse(
            status_code=422, content={"kind": "ConfigError", "detail": str(exc)}
        )

    @app.exception_handler(UndefinedMetricError)
    async def metric_error(_, exc):
        return JSONResponse(
            status_code=400, content={"kind": type(exc).__name__, "detail": str(exc)}
        )

    @app.exception_handler(MetricShapeError)
    async def metric_shape_error(_, exc):
        return JSONResponse(
            status_code=400, content={"kind": type(exc).__name__, "detail": str(exc)}
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return handlers.health()

    @app.get("/algorithms")
    def algorithms():
        return {"algorithms": list(ALGORITHMS)}

    @app.get("/presets")
    def presets():
        return {
            name: {
                "scheme": spec.scheme,
                "hidden_sizes": list(spec.hidden_sizes),
                "algorithm": spec.algorithm,
                "code_dims": list(spec.code_dims),
                "fine_tune": spec.fine_tune,
            }
            for name, spec in sorted(PRESETS.items())
        }

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        return handlers.synth(req)

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(req: schemas.IngestRequest):
        return handlers.ingest(req)

    @app.post("/metrics", response_model=schemas.MetricsResponse)
    def metrics(req: schemas.MetricsRequest):
        return handlers.metrics(req)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        return handlers.train_model(req)

    @app.post("/forecast", response_model=schemas.ForecastResponse)
    def forecast(req: schemas.ForecastRequest):
        return handlers.forecast(req)

    @app.post("/report", response_model=schemas.ReportResponse)
    def report(req: schemas.ReportRequest):
        return handlers.render_report(req)

    # Long-running protocol runs go through the job registry.

    @app.post("/experiments", response_model=schemas.JobCreated, status_code=202)
    def experiments(req: schemas.EvalRequest):
        job = registry.submit("experiment", lambda: handlers.run_eval(req).model_dump())
        return schemas.JobCreated(job_id=job.job_id, status=job.status)

    @app.post("/sweeps/architecture", response_model=schemas.JobCreated, status_code=202)
    def sweep_architecture(req: schemas.SweepArchRequest):
        job = registry.submit("sweep-arch", lambda: handlers.run_sweep_arch(req).model_dump())
        return schemas.JobCreated(job_id=job.job_id, status=job.status)

    @app.post("/sweeps/optimizer", response_model=schemas.JobCreated, status_code=202)
    def sweep_optimizer(req: schemas.SweepOptRequest):
        job = registry.submit("sweep-opt", lambda: handlers.run_sweep_opt(req).model_dump())
        return schemas.JobCreated(job_id=job.job_id, status=job.status)

    @app.get("/jobs/{job_id}", response_model=schemas.JobStatusResponse)
    def job_status(job_id: str):
        job = registry.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return schemas.JobStatusResponse(
            job_id=job.job_id,
            kind=job.kind,
            status=job.status,
            error=job.error,
            result=job.result,
        )

    return app


app = create_app()

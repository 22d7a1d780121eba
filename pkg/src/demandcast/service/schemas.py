"""Pydantic request/response models for the forecasting service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    seed: int = 0
    n_months: int = Field(176, ge=1)
    start_month: str = "1999-01"


class SeriesSummary(BaseModel):
    length: int
    start: str
    end: str
    digest: str


class SynthResponse(BaseModel):
    csv: str
    series: SeriesSummary


class IngestRequest(BaseModel):
    csv: str
    # Optional yearly driver tables, column name -> [[year, value], ...];
    # expanded onto the months before validation.
    yearly: dict[str, list[tuple[int, float]]] | None = None
    yearly_mode: Literal["hold", "interpolate"] = "hold"


class IngestResponse(BaseModel):
    csv: str
    series: SeriesSummary


class MetricsRequest(BaseModel):
    y: list[float]
    y_hat: list[float]


class MetricsResponse(BaseModel):
    mae: float
    rmse: float
    mape: float


class SeriesSource(BaseModel):
    """Exactly one of: a CSV path (CLI use), CSV text, or a synthetic spec."""

    csv: str | None = None
    csv_text: str | None = None
    synthetic: SynthRequest | None = None

    def as_config(self) -> dict:
        return {
            "csv": self.csv,
            "csv_text": self.csv_text,
            "synthetic": None if self.synthetic is None else self.synthetic.model_dump(),
        }


class ModelSpecPayload(BaseModel):
    preset: str | None = None
    name: str | None = None
    scheme: str | None = None
    hidden_sizes: list[int] | None = None
    algorithm: str | None = None
    code_dims: list[int] | None = None
    fine_tune: bool | None = None

    def as_config(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class TrainConfigPayload(BaseModel):
    algorithm: str | None = None
    max_epochs: int | None = None
    grad_tol: float | None = None
    loss_tol: float | None = None
    lr: float | None = None
    momentum: float | None = None
    lr_inc: float | None = None
    lr_dec: float | None = None
    max_loss_rise: float | None = None
    mu_init: float | None = None
    mu_inc: float | None = None
    mu_dec: float | None = None
    mu_max: float | None = None
    scg_lambda: float | None = None
    scg_sigma: float | None = None
    rprop: dict[str, float] | None = None
    seed: int | None = None

    def as_config(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class PlanPayload(BaseModel):
    window_lengths: list[int] | str | None = None
    horizon: int | None = None
    runs_per_window: int | None = None
    base_seed: int | None = None
    workers: int | None = None

    def as_config(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class TrainRequest(BaseModel):
    series: SeriesSource
    model: ModelSpecPayload = Field(default_factory=ModelSpecPayload)
    train: TrainConfigPayload = Field(default_factory=TrainConfigPayload)
    ae_train: TrainConfigPayload = Field(default_factory=TrainConfigPayload)
    # Months 1..window train the model; omitted means the whole series.
    window: int | None = None


class TrainReportPayload(BaseModel):
    final_loss: float
    epochs_run: int
    stop_reason: str
    loss_trace: list[float]


class TrainResponse(BaseModel):
    bundle: dict[str, Any]
    report: TrainReportPayload


class ForecastRequest(BaseModel):
    bundle: dict[str, Any]
    # Raw-scale driver rows, one per month to forecast.
    features: list[list[float]]


class ForecastResponse(BaseModel):
    predictions: list[float]


class EvalRequest(BaseModel):
    series: SeriesSource
    model: ModelSpecPayload = Field(default_factory=ModelSpecPayload)
    plan: PlanPayload = Field(default_factory=PlanPayload)
    train: TrainConfigPayload = Field(default_factory=TrainConfigPayload)
    ae_train: TrainConfigPayload = Field(default_factory=TrainConfigPayload)


class OverallRow(BaseModel):
    model: str
    mape: float | None
    rmse_norm: float | None
    mae_norm: float | None
    rmse_orig: float | None
    mae_orig: float | None
    failed_runs: int
    total_runs: int


class EvalResponse(BaseModel):
    result: dict[str, Any]
    overall: OverallRow
    per_horizon: list[dict[str, Any]]


class SweepArchRequest(BaseModel):
    series: SeriesSource
    scheme: Literal["MLP", "CFMLP"] = "MLP"
    depth: Literal[1, 2] = 1
    neurons: list[int] | str = "1:15"
    algorithm: str = "LM"
    plan: PlanPayload = Field(default_factory=PlanPayload)
    train: TrainConfigPayload = Field(default_factory=TrainConfigPayload)


class SweepOptRequest(BaseModel):
    series: SeriesSource
    scheme: Literal["MLP", "CFMLP"] = "MLP"
    hidden_sizes: list[int] = [4]
    plan: PlanPayload = Field(default_factory=PlanPayload)
    train: TrainConfigPayload = Field(default_factory=TrainConfigPayload)


class SweepResponse(BaseModel):
    kind: str
    rows: list[dict[str, Any]]


class ReportRequest(BaseModel):
    results: list[dict[str, Any]]
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


class ReportResponse(BaseModel):
    files: dict[str, str]


class JobCreated(BaseModel):
    job_id: str
    status: str


class JobStatusResponse(BaseModel):
    job_id: str
    kind: str
    status: str
    error: str | None = None
    result: dict[str, Any] | None = None

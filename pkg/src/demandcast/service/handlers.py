"""Service-layer operations: plain functions from request to response models.

The FastAPI app routes to these, and the CLI calls them directly as a thin
in-process client, so both surfaces share one code path.
"""

from __future__ import annotations

import tempfile
from dataclasses import replace

import numpy as np

from .. import __version__
from ..configio import (
    ConfigError,
    model_spec_from_dict,
    parse_windows,
    plan_from_config,
    series_from_source,
    train_config_from_dict,
)
from ..dataset import (
    FEATURE_COLUMNS,
    NormalizationParams,
    Series,
    YEARLY_COLUMNS,
    expand_yearly,
    fit_normalization,
    loads_csv,
    series_from_rows,
    series_to_csv,
)
from ..deepstack import deep_checkpoint_dict, deep_model_from_checkpoint, predict
from ..harness import (
    ExperimentPlan,
    fit_and_forecast,
    overall_table,
    report as write_report,
    result_from_dict,
    result_to_dict,
    run_experiment,
    series_digest,
    sweep_architecture,
    sweep_optimizer,
    sweep_table_rows,
)
from ..metrics import mae, mape, rmse
from ..network import checkpoint_dict, format_float, network_from_checkpoint
from . import schemas

BUNDLE_FORMAT = "demandcast-bundle/1"


def _summary(series: Series) -> schemas.SeriesSummary:
    return schemas.SeriesSummary(
        length=len(series),
        start=series.samples[0].calendar_month,
        end=series.samples[-1].calendar_month,
        digest=series_digest(series),
    )


def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    series = series_from_source({"synthetic": req.model_dump()})
    return schemas.SynthResponse(csv=series_to_csv(series), series=_summary(series))


def ingest(req: schemas.IngestRequest) -> schemas.IngestResponse:
    """Validate a monthly CSV, optionally step-holding yearly driver tables in."""
    series = loads_csv(req.csv)
    if req.yearly:
        unknown = set(req.yearly) - set(YEARLY_COLUMNS)
        if unknown:
            raise ConfigError(
                f"yearly tables only allowed for {YEARLY_COLUMNS}, got {sorted(unknown)}"
            )
        months = list(series.calendar_months)
        replacements = {
            col: expand_yearly(table, months, mode=req.yearly_mode)
            for col, table in req.yearly.items()
        }
        rows = []
        for i, sample in enumerate(series.samples):
            feats = list(sample.features)
            for col, values in replacements.items():
                feats[FEATURE_COLUMNS.index(col)] = float(values[i])
            rows.append((sample.calendar_month, feats, sample.demand))
        series = series_from_rows(rows)
    return schemas.IngestResponse(csv=series_to_csv(series), series=_summary(series))


def metrics(req: schemas.MetricsRequest) -> schemas.MetricsResponse:
    return schemas.MetricsResponse(
        mae=mae(req.y, req.y_hat),
        rmse=rmse(req.y, req.y_hat),
        mape=mape(req.y, req.y_hat),
    )


def _norm_dict(norm: NormalizationParams) -> dict:
    return {
        "lo": [format_float(v) for v in norm.lo],
        "hi": [format_float(v) for v in norm.hi],
    }


def _norm_from_dict(d: dict) -> NormalizationParams:
    return NormalizationParams(
        lo=np.array([float(v) for v in d["lo"]]),
        hi=np.array([float(v) for v in d["hi"]]),
    )


def train_model(req: schemas.TrainRequest) -> schemas.TrainResponse:
    """Fit one model on months 1..window and package it with its scaler."""
    series = series_from_source(req.series.as_config())
    spec = model_spec_from_dict(req.model.as_config())
    train_cfg = train_config_from_dict(req.train.as_config())
    ae_cfg_dict = req.ae_train.as_config()
    ae_cfg = train_config_from_dict(ae_cfg_dict) if ae_cfg_dict else replace(
        train_cfg, algorithm="LM"
    )
    window = req.window if req.window is not None else len(series)
    if not 1 <= window <= len(series):
        raise ConfigError(f"window must be in 1..{len(series)}, got {window}")

    norm = fit_normalization(series, window)
    x_train = norm.normalize_features(series.feature_matrix[:window])
    y_train = norm.normalize_demand(series.demand_vector[:window])
    seed = train_cfg.seed
    _, failed, fitted, report = fit_and_forecast(
        spec, train_cfg, ae_cfg, x_train, y_train, np.empty((0, x_train.shape[1])), seed
    )
    if not spec.is_deep:
        model_dict = checkpoint_dict(fitted)
        kind = "network"
    else:
        model_dict = deep_checkpoint_dict(fitted)
        kind = "deep"

    bundle = {
        "format": BUNDLE_FORMAT,
        "model_kind": kind,
        "model": model_dict,
        "normalization": _norm_dict(norm),
        "window": window,
        "model_spec": {
            "name": spec.name,
            "scheme": spec.scheme,
            "hidden_sizes": list(spec.hidden_sizes),
            "algorithm": spec.algorithm,
            "code_dims": list(spec.code_dims),
            "fine_tune": spec.fine_tune,
        },
        "series_digest": series_digest(series),
        "failed": bool(failed),
    }
    report_payload = schemas.TrainReportPayload(
        final_loss=report.final_loss,
        epochs_run=report.epochs_run,
        stop_reason=report.stop_reason,
        loss_trace=list(report.loss_trace),
    )
    return schemas.TrainResponse(bundle=bundle, report=report_payload)


def forecast(req: schemas.ForecastRequest) -> schemas.ForecastResponse:
    bundle = req.bundle
    if bundle.get("format") != BUNDLE_FORMAT:
        raise ConfigError(f"not a model bundle: format={bundle.get('format')!r}")
    norm = _norm_from_dict(bundle["normalization"])
    features = np.asarray(req.features, dtype=float)
    if features.ndim != 2 or features.shape[1] != len(FEATURE_COLUMNS):
        raise ConfigError(f"features must be rows of {len(FEATURE_COLUMNS)} values")
    x = norm.normalize_features(features)
    if bundle["model_kind"] == "network":
        from ..network import forward_batch

        net = network_from_checkpoint(bundle["model"])
        preds_norm = forward_batch(net, x)[:, 0]
    else:
        model = deep_model_from_checkpoint(bundle["model"])
        preds_norm = np.atleast_1d(predict(model, x))
    preds = norm.denormalize_demand(preds_norm)
    return schemas.ForecastResponse(predictions=[float(v) for v in preds])


def _plan_from_payloads(
    model: schemas.ModelSpecPayload,
    plan: schemas.PlanPayload,
    train: schemas.TrainConfigPayload,
    ae_train: schemas.TrainConfigPayload,
) -> ExperimentPlan:
    cfg = {
        "model": model.as_config(),
        "plan": plan.as_config(),
        "train": train.as_config(),
        "ae_train": ae_train.as_config() or None,
    }
    return plan_from_config({k: v for k, v in cfg.items() if v is not None})


def run_eval(req: schemas.EvalRequest) -> schemas.EvalResponse:
    series = series_from_source(req.series.as_config())
    plan = _plan_from_payloads(req.model, req.plan, req.train, req.ae_train)
    result = run_experiment(series, plan)
    row = overall_table([result])[0]
    return schemas.EvalResponse(
        result=result_to_dict(result),
        overall=schemas.OverallRow(**row),
        per_horizon=result.per_horizon(),
    )


def run_sweep_arch(req: schemas.SweepArchRequest) -> schemas.SweepResponse:
    series = series_from_source(req.series.as_config())
    plan = _plan_from_payloads(
        schemas.ModelSpecPayload(), req.plan, req.train, schemas.TrainConfigPayload()
    )
    neurons = parse_windows(req.neurons)  # same "a:b" / list syntax as windows
    table = sweep_architecture(series, req.scheme, req.depth, neurons, req.algorithm, plan)
    return schemas.SweepResponse(kind=table.kind, rows=sweep_table_rows(table))


def run_sweep_opt(req: schemas.SweepOptRequest) -> schemas.SweepResponse:
    series = series_from_source(req.series.as_config())
    plan = _plan_from_payloads(
        schemas.ModelSpecPayload(), req.plan, req.train, schemas.TrainConfigPayload()
    )
    table = sweep_optimizer(series, req.scheme, req.hidden_sizes, plan)
    return schemas.SweepResponse(kind=table.kind, rows=sweep_table_rows(table))


def render_report(req: schemas.ReportRequest) -> schemas.ReportResponse:
    results = [result_from_dict(d) for d in req.results]
    with tempfile.TemporaryDirectory() as tmp:
        written = write_report(results, tmp, formats=tuple(req.formats))
        files = {}
        for name, path in written.items():
            with open(path) as fh:
                files[name] = fh.read()
    return schemas.ReportResponse(files=files)

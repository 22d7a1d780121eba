"""The experimental protocol: expanding windows, repeated runs, sweeps, reports.

For every window length l and run r the pipeline is: fit the [-1, 1] scaling
on months 1..l, train the configured model on those months, predict months
l+1..l+24, and record the errors per look-ahead horizon on both the original
demand scale and the normalized scale.  Everything is a pure function of
(series bytes, plan): seeds follow a fixed schedule, so reruns are
bit-identical at any worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from . import metrics as metrics_mod
from .dataset import Series, WindowSpec, fit_normalization, series_to_csv, slice_window
from .deepstack import DeepModel, fine_tune, predict, pretrain_front, pretrain_stack
from .metrics import Metrics
from .network import Topology, forward_batch, init_weights
from .optimizers import ALGORITHMS, STOP_NUMERICAL, TrainConfig, train
from .presets import ModelSpec

logger = logging.getLogger(__name__)

SEED_STRIDE = 1_000_003


def run_seed(base_seed: int, window: int, run: int) -> int:
    """Deterministic, collision-free seed per (window, run) cell."""
    return base_seed + SEED_STRIDE * window + run


@dataclass(frozen=True)
class ExperimentPlan:
    """Expanding-window protocol: which model, which windows, how many runs."""

    model: ModelSpec
    window_lengths: tuple[int, ...] = tuple(range(120, 133))
    horizon: int = 24
    runs_per_window: int = 10
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    ae_train: TrainConfig = field(default_factory=lambda: TrainConfig(algorithm="LM"))
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "window_lengths", tuple(int(l) for l in self.window_lengths)
        )
        if not self.window_lengths:
            raise ValueError("window_lengths must be nonempty")
        if any(l < 1 for l in self.window_lengths):
            raise ValueError("window lengths must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.runs_per_window < 1:
            raise ValueError("runs_per_window must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def total_runs(self) -> int:
        return len(self.window_lengths) * self.runs_per_window

    def digest(self) -> str:
        payload = {
            "model": asdict(self.model),
            "window_lengths": list(self.window_lengths),
            "horizon": self.horizon,
            "runs_per_window": self.runs_per_window,
            "base_seed": self.base_seed,
            "train": asdict(self.train),
            "ae_train": asdict(self.ae_train),
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class PredictionRecord:
    """One (window, run, horizon) forecast on both scales."""

    window: int
    run: int
    horizon: int
    month_index: int
    y_true: float
    y_pred: float
    y_true_norm: float
    y_pred_norm: float
    failed: bool


def fit_and_forecast(spec: ModelSpec, train_cfg: TrainConfig, ae_cfg: TrainConfig,
                     x_train, y_train, x_test, seed: int):
    """Fit one model on a normalized window and forecast the test rows.

    Returns (predictions, failed, fitted model, report of the last supervised
    phase).  Numerical failures never raise; they flag the run and forecast
    from the last finite iterate.
    """
    cfg = replace(train_cfg, algorithm=spec.algorithm, seed=seed)
    input_dim = np.asarray(x_train).shape[1]
    if not spec.is_deep:
        topology = Topology(spec.scheme, input_dim, spec.hidden_sizes, 1)
        net = init_weights(topology, seed)
        net, report = train(net, (x_train, y_train), cfg)
        preds = forward_batch(net, x_test)[:, 0] if len(x_test) else np.empty(0)
        failed = report.stop_reason == STOP_NUMERICAL
        return preds, failed or not np.all(np.isfinite(preds)), net, report

    stack = pretrain_stack(x_train, spec.code_dims, replace(ae_cfg, seed=seed), seed)
    front_topology = Topology(spec.scheme, stack[-1].code_dim, spec.hidden_sizes, 1)
    front, report = pretrain_front(stack, (x_train, y_train), front_topology, cfg, seed)
    model = DeepModel(stack=stack, front=front)
    failed = report.stop_reason == STOP_NUMERICAL
    if spec.fine_tune:
        model, ft_report = fine_tune(model, (x_train, y_train), cfg)
        if ft_report is not None:
            report = ft_report
            failed = failed or ft_report.stop_reason == STOP_NUMERICAL
    preds = predict(model, np.atleast_2d(x_test)) if len(x_test) else np.empty(0)
    return preds, failed or not np.all(np.isfinite(preds)), model, report


def _run_window(series: Series, plan: ExperimentPlan, window: int) -> list[PredictionRecord]:
    norm = fit_normalization(series, window)
    _, test_samples = slice_window(series, WindowSpec(window, plan.horizon))
    x_all, y_all = series.feature_matrix, series.demand_vector
    x_train = norm.normalize_features(x_all[:window])
    y_train = norm.normalize_demand(y_all[:window])
    x_test = norm.normalize_features(x_all[window : window + plan.horizon])
    y_test = y_all[window : window + plan.horizon]
    y_test_norm = norm.normalize_demand(y_test)

    records: list[PredictionRecord] = []
    for run in range(1, plan.runs_per_window + 1):
        seed = run_seed(plan.base_seed, window, run)
        preds_norm, failed, _, _ = fit_and_forecast(
            plan.model, plan.train, plan.ae_train, x_train, y_train, x_test, seed
        )
        preds_norm = np.asarray(preds_norm, dtype=float)
        preds = norm.denormalize_demand(preds_norm)
        for h in range(1, plan.horizon + 1):
            records.append(
                PredictionRecord(
                    window=window,
                    run=run,
                    horizon=h,
                    month_index=test_samples[h - 1].month_index,
                    y_true=float(y_test[h - 1]),
                    y_pred=float(preds[h - 1]),
                    y_true_norm=float(y_test_norm[h - 1]),
                    y_pred_norm=float(preds_norm[h - 1]),
                    failed=bool(failed),
                )
            )
    return records


@dataclass(frozen=True)
class ExperimentResult:
    """All records of one experiment plus aggregate error tables."""

    model_name: str
    window_lengths: tuple[int, ...]
    horizon: int
    runs_per_window: int
    base_seed: int
    records: tuple[PredictionRecord, ...]
    series_digest: str
    plan_digest: str

    @property
    def failed_runs(self) -> int:
        return len({(r.window, r.run) for r in self.records if r.failed})

    @property
    def total_runs(self) -> int:
        return len(self.window_lengths) * self.runs_per_window

    @property
    def all_failed(self) -> bool:
        return self.failed_runs == self.total_runs

    @cached_property
    def _run_groups(self) -> dict[tuple[int, int], list[PredictionRecord]]:
        groups: dict[tuple[int, int], list[PredictionRecord]] = {}
        for rec in self.records:
            if not rec.failed:
                groups.setdefault((rec.window, rec.run), []).append(rec)
        return groups

    def overall(self, scale: str = "original") -> Metrics | None:
        """Mean over surviving runs of each run's 24-horizon error metrics."""
        groups = self._run_groups
        if not groups:
            return None
        maes, rmses, mapes = [], [], []
        for recs in groups.values():
            if scale == "original":
                y = np.array([r.y_true for r in recs])
                y_hat = np.array([r.y_pred for r in recs])
            else:
                y = np.array([r.y_true_norm for r in recs])
                y_hat = np.array([r.y_pred_norm for r in recs])
            maes.append(metrics_mod.mae(y, y_hat))
            rmses.append(metrics_mod.rmse(y, y_hat))
            if scale == "original":
                mapes.append(metrics_mod.mape(y, y_hat))
        return Metrics(
            mae=float(np.mean(maes)),
            rmse=float(np.mean(rmses)),
            mape=float(np.mean(mapes)) if mapes else None,
        )

    def per_horizon(self) -> list[dict]:
        """Fig.-6-shaped curve: one row per look-ahead horizon 1..H."""
        rows = []
        for h in range(1, self.horizon + 1):
            recs = [r for r in self.records if r.horizon == h and not r.failed]
            if recs:
                y = np.array([r.y_true for r in recs])
                y_hat = np.array([r.y_pred for r in recs])
                yn = np.array([r.y_true_norm for r in recs])
                yn_hat = np.array([r.y_pred_norm for r in recs])
                rows.append(
                    {
                        "horizon": h,
                        "mape": metrics_mod.mape(y, y_hat),
                        "mae": metrics_mod.mae(y, y_hat),
                        "rmse": metrics_mod.rmse(y, y_hat),
                        "mae_norm": metrics_mod.mae(yn, yn_hat),
                        "rmse_norm": metrics_mod.rmse(yn, yn_hat),
                    }
                )
            else:
                rows.append(
                    {"horizon": h, "mape": None, "mae": None, "rmse": None,
                     "mae_norm": None, "rmse_norm": None}
                )
        return rows


def series_digest(series: Series) -> str:
    return hashlib.sha256(series_to_csv(series).encode()).hexdigest()


def run_experiment(series: Series, plan: ExperimentPlan) -> ExperimentResult:
    """Execute the full (window x run x horizon) grid for one model."""
    max_l = max(plan.window_lengths)
    if max_l + plan.horizon > len(series):
        raise ValueError(
            f"window {max_l} + horizon {plan.horizon} exceeds series length {len(series)}"
        )
    windows = plan.window_lengths
    if plan.workers > 1 and len(windows) > 1:
        with ProcessPoolExecutor(max_workers=min(plan.workers, len(windows))) as pool:
            chunks = list(pool.map(_run_window, [series] * len(windows),
                                   [plan] * len(windows), windows))
    else:
        chunks = [_run_window(series, plan, l) for l in windows]
    records: list[PredictionRecord] = []
    for chunk in chunks:
        records.extend(chunk)
    result = ExperimentResult(
        model_name=plan.model.name,
        window_lengths=windows,
        horizon=plan.horizon,
        runs_per_window=plan.runs_per_window,
        base_seed=plan.base_seed,
        records=tuple(records),
        series_digest=series_digest(series),
        plan_digest=plan.digest(),
    )
    if result.failed_runs:
        logger.warning(
            "%s: %d/%d runs hit numerical failure and are excluded from averages",
            plan.model.name, result.failed_runs, result.total_runs,
        )
    return result


# --- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    label: str
    scheme: str
    hidden_sizes: tuple[int, ...]
    algorithm: str
    mape: float | None
    rmse_norm: float | None
    mae_norm: float | None
    rmse: float | None
    mae: float | None
    failed_runs: int
    all_failed: bool


@dataclass(frozen=True)
class SweepTable:
    kind: str
    rows: tuple[SweepRow, ...]

    def ranked(self) -> tuple[SweepRow, ...]:
        return self.rows


def _sweep_row(label: str, spec: ModelSpec, result: ExperimentResult) -> SweepRow:
    overall = result.overall("original")
    overall_norm = result.overall("normalized")
    return SweepRow(
        label=label,
        scheme=spec.scheme,
        hidden_sizes=spec.hidden_sizes,
        algorithm=spec.algorithm,
        mape=None if overall is None else overall.mape,
        rmse_norm=None if overall_norm is None else overall_norm.rmse,
        mae_norm=None if overall_norm is None else overall_norm.mae,
        rmse=None if overall is None else overall.rmse,
        mae=None if overall is None else overall.mae,
        failed_runs=result.failed_runs,
        all_failed=result.all_failed,
    )


def _rank_key(row: SweepRow):
    mape = np.inf if row.mape is None else row.mape
    rmse = np.inf if row.rmse_norm is None else row.rmse_norm
    return (mape, sum(row.hidden_sizes), rmse)


def sweep_architecture(
    series: Series,
    scheme: str,
    depth: int,
    neuron_range,
    algorithm: str,
    plan: ExperimentPlan,
) -> SweepTable:
    """Try every hidden-size candidate, rank by overall MAPE.

    Ties break toward fewer total neurons, then lower RMSE.  Depth 2 sweeps
    the full cartesian grid.
    """
    sizes = tuple(int(n) for n in neuron_range)
    if not sizes:
        raise ValueError("neuron range must be nonempty")
    if depth == 1:
        candidates = [(n,) for n in sizes]
    elif depth == 2:
        candidates = [(a, b) for a in sizes for b in sizes]
    else:
        raise ValueError("depth must be 1 or 2")
    rows = []
    for hidden in candidates:
        label = f"{scheme}-{'x'.join(str(h) for h in hidden)}"
        spec = ModelSpec(label, scheme, hidden, algorithm)
        result = run_experiment(series, replace(plan, model=spec))
        rows.append(_sweep_row(label, spec, result))
        logger.info("arch sweep %s: mape=%s", label, rows[-1].mape)
    rows.sort(key=_rank_key)
    return SweepTable(kind="architecture", rows=tuple(rows))


def sweep_optimizer(
    series: Series, scheme: str, hidden_sizes, plan: ExperimentPlan
) -> SweepTable:
    """One experiment per training algorithm on a fixed architecture.

    The seed schedule ignores the algorithm, so every row starts from
    identical initial weights per (window, run).
    """
    hidden = tuple(int(h) for h in hidden_sizes)
    rows = []
    for algo in ALGORITHMS:
        spec = ModelSpec(f"{scheme}-{algo}", scheme, hidden, algo)
        result = run_experiment(series, replace(plan, model=spec))
        rows.append(_sweep_row(algo, spec, result))
        logger.info("optimizer sweep %s: mape=%s", algo, rows[-1].mape)
    rows.sort(key=lambda r: (np.inf if r.mape is None else r.mape,
                             np.inf if r.rmse_norm is None else r.rmse_norm))
    return SweepTable(kind="optimizer", rows=tuple(rows))


# --- serialization and reports --------------------------------------------------

_RECORD_FIELDS = (
    "window", "run", "horizon", "month_index",
    "y_true", "y_pred", "y_true_norm", "y_pred_norm", "failed",
)


def result_to_dict(result: ExperimentResult) -> dict:
    return {
        "model_name": result.model_name,
        "window_lengths": list(result.window_lengths),
        "horizon": result.horizon,
        "runs_per_window": result.runs_per_window,
        "base_seed": result.base_seed,
        "series_digest": result.series_digest,
        "plan_digest": result.plan_digest,
        "record_fields": list(_RECORD_FIELDS),
        "records": [
            [getattr(rec, f) for f in _RECORD_FIELDS] for rec in result.records
        ],
    }


def result_from_dict(d: dict) -> ExperimentResult:
    records = tuple(
        PredictionRecord(**dict(zip(d["record_fields"], row))) for row in d["records"]
    )
    return ExperimentResult(
        model_name=d["model_name"],
        window_lengths=tuple(d["window_lengths"]),
        horizon=int(d["horizon"]),
        runs_per_window=int(d["runs_per_window"]),
        base_seed=int(d["base_seed"]),
        records=records,
        series_digest=d["series_digest"],
        plan_digest=d["plan_digest"],
    )


def sweep_table_rows(table: SweepTable) -> list[dict]:
    return [
        {
            "rank": i + 1,
            "label": row.label,
            "scheme": row.scheme,
            "hidden_sizes": "x".join(str(h) for h in row.hidden_sizes),
            "algorithm": row.algorithm,
            "mape": row.mape,
            "rmse_norm": row.rmse_norm,
            "mae_norm": row.mae_norm,
            "rmse": row.rmse,
            "mae": row.mae,
            "failed_runs": row.failed_runs,
        }
        for i, row in enumerate(table.rows)
    ]


def _write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in fieldnames})


def overall_table(results) -> list[dict]:
    rows = []
    for result in results:
        overall = result.overall("original")
        overall_norm = result.overall("normalized")
        rows.append(
            {
                "model": result.model_name,
                "mape": None if overall is None else overall.mape,
                "rmse_norm": None if overall_norm is None else overall_norm.rmse,
                "mae_norm": None if overall_norm is None else overall_norm.mae,
                "rmse_orig": None if overall is None else overall.rmse,
                "mae_orig": None if overall is None else overall.mae,
                "failed_runs": result.failed_runs,
                "total_runs": result.total_runs,
            }
        )
    return rows


def report(results, outdir, formats=("csv", "json")) -> dict[str, str]:
    """Write the overall table, per-horizon curves and the run manifest.

    ``results`` is one ExperimentResult or a sequence of them (one per model,
    Table-1 shape).  Returns a {name: path} map of everything written.
    """
    if isinstance(results, ExperimentResult):
        results = [results]
    results = list(results)
    if not results:
        raise ValueError("nothing to report")
    os.makedirs(outdir, exist_ok=True)
    written: dict[str, str] = {}

    overall_rows = overall_table(results)
    overall_fields = list(overall_rows[0].keys())
    horizon_fields = ["horizon", "mape", "mae", "rmse", "mae_norm", "rmse_norm"]
    if "csv" in formats:
        path = os.path.join(outdir, "overall.csv")
        _write_csv(path, overall_fields, overall_rows)
        written["overall.csv"] = path
        for result in results:
            name = f"per_horizon_{result.model_name}.csv"
            path = os.path.join(outdir, name)
            _write_csv(path, horizon_fields, result.per_horizon())
            written[name] = path
    if "json" in formats:
        path = os.path.join(outdir, "overall.json")
        with open(path, "w") as fh:
            json.dump(
                {
                    "overall": overall_rows,
                    "per_horizon": {r.model_name: r.per_horizon() for r in results},
                },
                fh,
                indent=1,
            )
        written["overall.json"] = path

    digest_src = "|".join(f"{r.series_digest}:{r.plan_digest}" for r in results)
    manifest = {
        "digest": hashlib.sha256(digest_src.encode()).hexdigest(),
        "models": [
            {
                "model": r.model_name,
                "series_digest": r.series_digest,
                "plan_digest": r.plan_digest,
                "window_lengths": list(r.window_lengths),
                "horizon": r.horizon,
                "runs_per_window": r.runs_per_window,
                "base_seed": r.base_seed,
                "seed_schedule": f"base_seed + {SEED_STRIDE}*window + run",
                "failed_runs": r.failed_runs,
            }
            for r in results
        ],
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    written["manifest.json"] = path
    return written

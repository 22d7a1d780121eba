"""The three accuracy measures used throughout: MAE, RMSE and MAPE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricShapeError(ValueError):
    """Prediction and target vectors disagree in length (or are empty)."""


class UndefinedMetricError(ValueError):
    """MAPE is undefined when any actual value is zero."""


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=float).reshape(-1)
    if y.shape != y_hat.shape:
        raise MetricShapeError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.shape[0] == 0:
        raise MetricShapeError("empty vectors")
    return y, y_hat


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    """Root mean squared error."""
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def mape(y, y_hat) -> float:
    """Mean absolute percentage error, in percent.

    Only defined when every actual value is nonzero; demand always is.
    """
    y, y_hat = _pair(y, y_hat)
    if np.any(y == 0.0):
        raise UndefinedMetricError("actual value of 0 makes MAPE undefined")
    return float(100.0 * np.mean(np.abs(y - y_hat) / y))


@dataclass(frozen=True)
class Metrics:
    """One row of the error table; mape is None on scales where it is undefined."""

    mae: float
    rmse: float
    mape: float | None = None

    def as_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "mape": self.mape}

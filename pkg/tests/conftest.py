"""Shared test objectives and series builders."""

from __future__ import annotations

import numpy as np
import pytest

from demandcast.dataset import Series, series_from_rows


class QuadraticObjective:
    """loss = 0.5 (th - x*)' A (th - x*): positive definite, minimum 0 at x*."""

    def __init__(self, a: np.ndarray, xstar: np.ndarray):
        self.a = np.asarray(a, dtype=float)
        self.xstar = np.asarray(xstar, dtype=float)

    def loss(self, theta):
        d = np.asarray(theta, dtype=float) - self.xstar
        return 0.5 * float(d @ self.a @ d)

    def loss_grad(self, theta):
        d = np.asarray(theta, dtype=float) - self.xstar
        return 0.5 * float(d @ self.a @ d), self.a @ d


class LinearLeastSquares:
    """Residuals r = y - X theta; the linear-in-parameters LM oracle problem."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)

    @property
    def n_residuals(self):
        return len(self.y)

    def loss(self, theta):
        r = self.y - self.x @ theta
        return 0.5 * float(r @ r)

    def loss_grad(self, theta):
        r = self.y - self.x @ theta
        return 0.5 * float(r @ r), -self.x.T @ r

    def residuals_jacobian(self, theta):
        return self.y - self.x @ theta, -self.x

    def solution(self):
        return np.linalg.lstsq(self.x, self.y, rcond=None)[0]


def random_spd(rng, p: int) -> np.ndarray:
    m = rng.normal(size=(p, p))
    return m @ m.T + p * np.eye(p)


def toy_series(demand, start="2000-01") -> Series:
    """A small series with ramp features and the given demand values."""
    from demandcast.dataset import _month_ordinal, _ordinal_to_month

    n = len(demand)
    base = _month_ordinal(start)
    rows = []
    for i in range(n):
        month = _ordinal_to_month(base + i)
        feats = (
            100.0 + i,          # gdp
            19.0 + 0.01 * i,    # population
            300.0 + 2.0 * i,    # co2
            40.0 + (i % 12),    # precipitation
            0.1 * (i % 12) - 0.5,
            -1.0 - 0.05 * (i % 12),
            1.5 + 0.07 * (i % 7),
        )
        rows.append((month, feats, float(demand[i])))
    return series_from_rows(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)

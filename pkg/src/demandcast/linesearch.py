"""Strong-Wolfe line search (bracket and zoom with cubic interpolation).

The search works on a scalar restriction phi(alpha) = f(theta + alpha * dir)
supplied as a callable returning (value, directional derivative, payload);
the payload is opaque (typically the full gradient at the trial point) and is
handed back so callers never re-evaluate the accepted point.

Trial points come from quadratic/cubic fits, so on an exactly quadratic
restriction the search returns the exact line minimizer, which is what gives
conjugate-gradient and quasi-Newton methods their finite-termination property
on quadratic objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, NamedTuple


class AscentDirectionError(ValueError):
    """The supplied direction is not a descent direction."""


class LineSearchFailure(RuntimeError):
    """No step with a loss decrease could be found at all."""


class _Pt(NamedTuple):
    alpha: float
    val: float
    der: float
    payload: Any


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    value: float
    deriv: float
    payload: Any
    flagged: bool
    evals: int


def _finite(*vs) -> bool:
    return all(math.isfinite(v) for v in vs)


def _quad_min(f0: float, d0: float, t: float, ft: float) -> float | None:
    """Minimizer of the quadratic through (0, f0) with slope d0 and (t, ft)."""
    if not _finite(f0, d0, t, ft) or t <= 0:
        return None
    c = (ft - f0 - d0 * t) / (t * t)
    if c <= 0:
        return None
    out = -d0 / (2.0 * c)
    return out if math.isfinite(out) and out > 0 else None


def _cubic_min(a: _Pt, b: _Pt) -> float | None:
    """Minimizer of the Hermite cubic through two (alpha, value, slope) points."""
    if a.alpha == b.alpha or not _finite(a.val, a.der, b.val, b.der):
        return None
    d1 = a.der + b.der - 3.0 * (a.val - b.val) / (a.alpha - b.alpha)
    disc = d1 * d1 - a.der * b.der
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b.alpha - a.alpha)
    denom = b.der - a.der + 2.0 * d2
    if denom == 0:
        return None
    t = b.alpha - (b.alpha - a.alpha) * (b.der + d2 - d1) / denom
    return t if math.isfinite(t) else None


def wolfe_search(
    phi: Callable[[float], tuple[float, float, Any]],
    value0: float,
    deriv0: float,
    c1: float = 1e-4,
    c2: float = 0.1,
    init: float = 1.0,
    max_expand: int = 40,
    max_zoom: int = 25,
) -> LineSearchResult:
    """Find alpha > 0 satisfying the strong Wolfe conditions.

    Guarantees phi(alpha) < value0 on success.  If the zoom budget runs out
    without a Wolfe point, the shortest evaluated step that still decreases
    the value is returned with ``flagged=True``.  Raises AscentDirectionError
    when deriv0 >= 0 and LineSearchFailure when no decreasing step exists.
    """
    if deriv0 >= 0:
        raise AscentDirectionError(f"directional derivative {deriv0} is not negative")
    if not math.isfinite(value0):
        raise LineSearchFailure("starting value is not finite")

    evals = 0
    decreasing: list[_Pt] = []

    def evaluate(alpha: float) -> _Pt:
        nonlocal evals
        val, der, payload = phi(alpha)
        evals += 1
        if not _finite(val):
            val, der = math.inf, 0.0
        pt = _Pt(alpha, val, der, payload)
        if pt.val < value0:
            decreasing.append(pt)
        return pt

    def armijo(pt: _Pt) -> bool:
        return pt.val <= value0 + c1 * pt.alpha * deriv0

    def strong_wolfe(pt: _Pt) -> bool:
        return armijo(pt) and abs(pt.der) <= -c2 * deriv0

    def accept(pt: _Pt, flagged: bool = False) -> LineSearchResult:
        return LineSearchResult(pt.alpha, pt.val, pt.der, pt.payload, flagged, evals)

    def probe_quadratic(pt: _Pt) -> _Pt:
        # Even when pt already satisfies Wolfe, the one-sample quadratic fit
        # may predict a clearly better point; on exactly quadratic
        # restrictions it predicts the true minimizer.
        aq = _quad_min(value0, deriv0, pt.alpha, pt.val)
        if aq is None or abs(aq - pt.alpha) <= 1e-10 * pt.alpha:
            return pt
        c = (pt.val - value0 - deriv0 * pt.alpha) / (pt.alpha * pt.alpha)
        predicted = value0 + deriv0 * aq + c * aq * aq
        if not predicted < pt.val - 1e-9 * max(1.0, abs(pt.val)):
            return pt
        cand = evaluate(aq)
        if strong_wolfe(cand) and cand.val < pt.val:
            return cand
        return pt

    def fallback() -> LineSearchResult:
        if not decreasing:
            raise LineSearchFailure("no step with a loss decrease was found")
        return accept(min(decreasing, key=lambda p: p.alpha), flagged=True)

    def zoom(lo: _Pt, hi: _Pt) -> LineSearchResult:
        for _ in range(max_zoom):
            width = abs(hi.alpha - lo.alpha)
            if width <= 1e-18 * max(1.0, abs(lo.alpha)):
                break
            t = _cubic_min(lo, hi)
            left, right = min(lo.alpha, hi.alpha), max(lo.alpha, hi.alpha)
            margin = 0.05 * width
            if t is None or not left + margin <= t <= right - margin:
                t = 0.5 * (lo.alpha + hi.alpha)
            pt = evaluate(t)
            if not armijo(pt) or pt.val >= lo.val:
                hi = pt
            else:
                if abs(pt.der) <= -c2 * deriv0:
                    return accept(pt)
                if pt.der * (hi.alpha - lo.alpha) >= 0:
                    hi = lo
                lo = pt
        return fallback()

    prev = _Pt(0.0, value0, deriv0, None)
    alpha = init if init > 0 and math.isfinite(init) else 1.0
    for i in range(max_expand):
        pt = evaluate(alpha)
        if not armijo(pt) or (i > 0 and pt.val >= prev.val):
            return zoom(prev, pt)
        if abs(pt.der) <= -c2 * deriv0:
            return accept(probe_quadratic(pt))
        if pt.der >= 0:
            return zoom(pt, prev)
        # Still descending: expand, preferring the quadratic extrapolation.
        aq = _quad_min(value0, deriv0, pt.alpha, pt.val)
        nxt = 2.0 * pt.alpha
        if aq is not None and pt.alpha < aq <= 10.0 * pt.alpha:
            nxt = aq
        prev = pt
        alpha = nxt
    # Expansion budget exhausted while still decreasing: take what we have.
    return fallback()

"""The thirteen classical training algorithms behind one train() contract.

Batch (full-gradient) methods only; the objective is half the summed squared
residuals of a network over a fixed batch.  Levenberg-Marquardt (plain and
Bayesian-regularized) works on the residual Jacobian; the conjugate-gradient
family, BFGS and one-step secant use a strong-Wolfe line search; scaled
conjugate gradient, gradient descent variants and resilient backpropagation
need gradients only.

Every algorithm is a deterministic function of (initial parameters, batch,
config): there is no hidden randomness anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .linesearch import LineSearchFailure, wolfe_search
from .network import (
    Network,
    Wiring,
    _as_batch,
    _forward_all,
    loss_and_gradient,
    residuals_and_jacobian,
)

ALGORITHMS = (
    "LM",
    "LMbr",
    "GD",
    "GDm",
    "GDa",
    "GDma",
    "CGpb",
    "CGfr",
    "CGpr",
    "SCG",
    "BFGS",
    "OSS",
    "RBP",
)

STOP_MAX_EPOCHS = "max_epochs"
STOP_GRAD_TOL = "grad_tol"
STOP_LOSS_TOL = "loss_tol"
STOP_MU_OVERFLOW = "mu_overflow"
STOP_NUMERICAL = "numerical_failure"
STOP_REASONS = (
    STOP_MAX_EPOCHS,
    STOP_GRAD_TOL,
    STOP_LOSS_TOL,
    STOP_MU_OVERFLOW,
    STOP_NUMERICAL,
)

# Evidence-framework updates cap the regularizer instead of dividing by zero.
ALPHA_CEILING = 1e10


@dataclass(frozen=True)
class RpropConfig:
    delta0: float = 0.07
    delta_min: float = 1e-6
    delta_max: float = 50.0
    eta_plus: float = 1.2
    eta_minus: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta_min <= self.delta0 <= self.delta_max:
            raise ValueError("need 0 < delta_min <= delta0 <= delta_max")
        if not self.eta_minus < 1.0 < self.eta_plus:
            raise ValueError("need eta_minus < 1 < eta_plus")


@dataclass(frozen=True)
class TrainConfig:
    """Algorithm choice plus every tunable the steppers read.

    ``max_epochs=None`` resolves to the per-algorithm default: 300 for the
    Levenberg-Marquardt pair, 5000 for the slow gradient-descent family,
    1000 for everything else.  The gradient-descent family steps with the
    sample-averaged gradient, so ``lr`` is batch-size independent.
    """

    algorithm: str = "LM"
    max_epochs: int | None = None
    grad_tol: float = 1e-7
    loss_tol: float = 1e-12
    lr: float = 0.1
    momentum: float = 0.9
    lr_inc: float = 1.05
    lr_dec: float = 0.7
    max_loss_rise: float = 0.04
    mu_init: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    scg_lambda: float = 5e-5
    scg_sigma: float = 1e-5
    rprop: RpropConfig = field(default_factory=RpropConfig)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.grad_tol <= 0 or self.loss_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.lr_dec >= 1 or self.lr_dec <= 0 or self.lr_inc <= 1:
            raise ValueError("need 0 < lr_dec < 1 < lr_inc")
        if min(self.mu_init, self.mu_inc, self.mu_dec, self.mu_max) <= 0:
            raise ValueError("mu parameters must be > 0")
        if self.mu_inc <= 1 or self.mu_dec >= 1:
            raise ValueError("need mu_dec < 1 < mu_inc")
        if self.scg_lambda <= 0 or self.scg_sigma <= 0:
            raise ValueError("SCG parameters must be > 0")

    @property
    def effective_max_epochs(self) -> int:
        if self.max_epochs is not None:
            return self.max_epochs
        if self.algorithm in ("LM", "LMbr"):
            return 300
        if self.algorithm in ("GD", "GDm", "GDa", "GDma"):
            return 5000
        return 1000


@dataclass(frozen=True)
class TrainReport:
    """Outcome of one train() call; the trace records half-SSE per epoch."""

    final_loss: float
    epochs_run: int
    stop_reason: str
    loss_trace: tuple[float, ...]
    # For LMbr only: per accepted step, (F before, F after) under the
    # hyperparameters in force during that step, so the monotone-descent
    # contract on the regularized objective stays externally checkable.
    objective_steps: tuple[tuple[float, float], ...] | None = None
    flagged_line_searches: int = 0

    def __post_init__(self):
        if self.stop_reason not in STOP_REASONS:
            raise ValueError(f"unknown stop reason {self.stop_reason!r}")
        if len(self.loss_trace) != self.epochs_run + 1:
            raise ValueError("loss_trace must hold initial loss plus one entry per epoch")


class NetworkObjective:
    """Half-SSE of a network over a fixed batch, as functions of theta."""

    def __init__(self, wiring: Wiring, X: np.ndarray, Y: np.ndarray):
        self.wiring = wiring
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]

    @property
    def n_residuals(self) -> int:
        return self.Y.size

    def loss(self, theta: np.ndarray) -> float:
        _, acts = _forward_all(self.wiring, theta, self.X)
        resid = self.Y - acts[-1]
        return 0.5 * float(np.sum(resid * resid))

    def loss_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        return loss_and_gradient(self.wiring, theta, self.X, self.Y)

    def residuals_jacobian(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return residuals_and_jacobian(self.wiring, theta, self.X, self.Y)


# --- small per-algorithm steppers (unit-testable pieces) ---------------------


@dataclass
class GdState:
    lr: float
    prev_delta: np.ndarray


def gd_step(theta, grad, state: GdState, momentum: float = 0.0):
    """Propose theta' = theta - lr*grad + momentum*prev_delta."""
    delta = -state.lr * np.asarray(grad, dtype=float)
    if momentum:
        delta = delta + momentum * state.prev_delta
    return np.asarray(theta, dtype=float) + delta, GdState(state.lr, delta)


def gd_adapt(
    state: GdState,
    loss_before: float,
    loss_after: float,
    lr_inc: float,
    lr_dec: float,
    max_loss_rise: float = 0.04,
) -> tuple[bool, GdState]:
    """Adaptive-rate acceptance: reject rises beyond the tolerated fraction.

    Rejection shrinks the rate and clears the momentum buffer; an accepted
    step that lowered the loss grows the rate.
    """
    if not math.isfinite(loss_after) or loss_after > loss_before * (1.0 + max_loss_rise):
        return False, GdState(state.lr * lr_dec, np.zeros_like(state.prev_delta))
    lr = state.lr * lr_inc if loss_after < loss_before else state.lr
    return True, GdState(lr, state.prev_delta)


def cg_direction(grad, prev_grad, prev_dir, variant: str) -> np.ndarray:
    """New search direction for the FR / PR / PB conjugate-gradient variants."""
    grad = np.asarray(grad, dtype=float)
    if prev_grad is None or prev_dir is None:
        return -grad
    prev_grad = np.asarray(prev_grad, dtype=float)
    gg_prev = float(prev_grad @ prev_grad)
    if gg_prev == 0.0:
        return -grad
    if variant == "FR":
        beta = float(grad @ grad) / gg_prev
    elif variant == "PR":
        beta = max(0.0, float(grad @ (grad - prev_grad)) / gg_prev)
    elif variant == "PB":
        # Powell's restart test on loss of conjugacy, then a PR-style update.
        if abs(float(prev_grad @ grad)) >= 0.2 * float(grad @ grad):
            return -grad
        beta = max(0.0, float(grad @ (grad - prev_grad)) / gg_prev)
    else:
        raise ValueError(f"unknown CG variant {variant!r}")
    return -grad + beta * np.asarray(prev_dir, dtype=float)


class LmAttempt(NamedTuple):
    theta: np.ndarray
    mu: float
    accepted: bool
    loss: float


def _lm_attempt(objective, theta, loss, jtj, grad_vec, mu, mu_inc, mu_dec) -> LmAttempt:
    """One damped Gauss-Newton proposal; never raises on singular systems."""
    a = jtj.copy()
    a.flat[:: a.shape[0] + 1] += mu
    try:
        delta = np.linalg.solve(a, -grad_vec)
    except np.linalg.LinAlgError:
        return LmAttempt(theta, mu * mu_inc, False, loss)
    if not np.all(np.isfinite(delta)):
        return LmAttempt(theta, mu * mu_inc, False, loss)
    cand = theta + delta
    cand_loss = objective.loss(cand)
    if math.isfinite(cand_loss) and cand_loss <= loss:
        return LmAttempt(cand, max(mu * mu_dec, 1e-300), True, cand_loss)
    return LmAttempt(theta, mu * mu_inc, False, loss)


def lm_step(net: Network, batch, mu: float, mu_inc: float = 10.0, mu_dec: float = 0.1):
    """Single Levenberg-Marquardt proposal on a network.

    Returns (network', mu', accepted); on rejection the returned network is
    the input object, bit-identical.
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    X, Y = _as_batch(net, batch)
    obj = NetworkObjective(net.wiring, X, Y)
    r, jac = obj.residuals_jacobian(net.theta)
    att = _lm_attempt(
        obj, net.theta, 0.5 * float(r @ r), jac.T @ jac, jac.T @ r, mu, mu_inc, mu_dec
    )
    out = net.with_theta(att.theta) if att.accepted else net
    return out, att.mu, att.accepted


class BayesUpdate(NamedTuple):
    alpha: float
    beta: float
    gamma: float
    clamped: bool


def bayes_hyperparam_update(
    loss_data: float,
    loss_weights: float,
    theta: np.ndarray,
    hessian_approx: np.ndarray,
    alpha: float,
    n_samples: int,
) -> BayesUpdate:
    """Evidence-framework re-estimation of the (alpha, beta) hyperparameters.

    gamma = P - 2*alpha*tr(H^-1) counts effective parameters; then
    alpha' = gamma / (2*E_w) and beta' = (N - gamma) / (2*E_D), with division
    guards capping at a large finite ceiling and gamma clamped into [0, P].
    """
    p = len(theta)
    h = hessian_approx
    for bump in (0.0, 1e-12, 1e-6):
        try:
            hm = h if bump == 0.0 else h + bump * np.eye(p)
            trace_inv = float(np.trace(np.linalg.inv(hm)))
            if math.isfinite(trace_inv):
                break
        except np.linalg.LinAlgError:
            continue
    else:
        trace_inv = 0.0
    gamma = p - 2.0 * alpha * trace_inv
    clamped = False
    if not math.isfinite(gamma) or gamma < 0.0:
        gamma, clamped = 0.0, True
    elif gamma > p:
        gamma, clamped = float(p), True
    if loss_weights > 0:
        alpha_new = min(gamma / (2.0 * loss_weights), ALPHA_CEILING)
    else:
        alpha_new, clamped = ALPHA_CEILING, True
    if loss_data > 0:
        beta_new = (n_samples - gamma) / (2.0 * loss_data)
        if beta_new <= 0 or not math.isfinite(beta_new):
            beta_new, clamped = 1e-12, True
        beta_new = min(beta_new, ALPHA_CEILING)
    else:
        beta_new, clamped = ALPHA_CEILING, True
    return BayesUpdate(alpha_new, beta_new, gamma, clamped)


@dataclass
class QuasiNewtonState:
    """BFGS keeps a dense inverse-Hessian estimate; OSS only the last pair."""

    variant: str
    h_inv: np.ndarray | None = None
    s: np.ndarray | None = None
    y: np.ndarray | None = None
    scale_pending: bool = True


def _curvature_ok(s, y) -> bool:
    sy = float(s @ y)
    return sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y))


def _bfgs_apply(h, s, y):
    rho = 1.0 / float(s @ y)
    hy = h @ y
    return (
        h
        - rho * (np.outer(s, hy) + np.outer(hy, s))
        + (rho + rho * rho * float(y @ hy)) * np.outer(s, s)
    )


def quasi_newton_step(state: QuasiNewtonState, grad, variant: str | None = None):
    """Produce a search direction, folding in the stored (s, y) pair.

    A failed curvature guard skips the BFGS update (resets the OSS pair) and
    the direction falls back to steepest descent when necessary.
    """
    grad = np.asarray(grad, dtype=float)
    variant = variant or state.variant
    if variant == "BFGS":
        h = state.h_inv if state.h_inv is not None else np.eye(len(grad))
        scale_pending = state.scale_pending
        if state.s is not None and state.y is not None:
            if _curvature_ok(state.s, state.y):
                if scale_pending:
                    h = h * (float(state.s @ state.y) / float(state.y @ state.y))
                    scale_pending = False
                h = _bfgs_apply(h, state.s, state.y)
        direction = -h @ grad
        if float(direction @ grad) >= 0.0:
            h = np.eye(len(grad))
            scale_pending = True
            direction = -grad
        return direction, QuasiNewtonState(variant, h, None, None, scale_pending)
    if variant == "OSS":
        s, y = state.s, state.y
        if s is None or y is None or not _curvature_ok(s, y):
            return -grad, QuasiNewtonState(variant)
        sy = float(s @ y)
        sg = float(s @ grad)
        yg = float(y @ grad)
        a_coef = -(1.0 + float(y @ y) / sy) * sg / sy + yg / sy
        b_coef = sg / sy
        direction = -grad + a_coef * s + b_coef * y
        if float(direction @ grad) >= 0.0:
            direction = -grad
        return direction, QuasiNewtonState(variant)
    raise ValueError(f"unknown quasi-Newton variant {variant!r}")


@dataclass
class RpropState:
    step_sizes: np.ndarray
    prev_grad: np.ndarray


def rprop_step(theta, grad, state: RpropState, cfg: RpropConfig):
    """iRprop- update: sign agreement grows steps, a sign flip shrinks them
    and suppresses that weight's move for the epoch."""
    grad = np.asarray(grad, dtype=float)
    prod = grad * state.prev_grad
    steps = state.step_sizes.copy()
    inc = prod > 0
    dec = prod < 0
    steps[inc] = np.minimum(steps[inc] * cfg.eta_plus, cfg.delta_max)
    steps[dec] = np.maximum(steps[dec] * cfg.eta_minus, cfg.delta_min)
    g_eff = np.where(dec, 0.0, grad)
    theta_new = np.asarray(theta, dtype=float) - np.sign(g_eff) * steps
    return theta_new, RpropState(steps, g_eff)


def line_search(net: Network, batch, theta, direction, c1: float = 1e-4, c2: float = 0.1) -> float:
    """Strong-Wolfe step length along a descent direction of the batch loss."""
    X, Y = _as_batch(net, batch)
    obj = NetworkObjective(net.wiring, X, Y)
    theta = np.asarray(theta, dtype=float)
    direction = np.asarray(direction, dtype=float)
    loss0, grad0 = obj.loss_grad(theta)
    d0 = float(direction @ grad0)

    def phi(alpha):
        val, g = obj.loss_grad(theta + alpha * direction)
        return val, float(g @ direction), g

    return wolfe_search(phi, loss0, d0, c1=c1, c2=c2).alpha


# --- the train loop -----------------------------------------------------------


class _Run:
    """Shared trace/stop bookkeeping for all drivers."""

    def __init__(self, cfg: TrainConfig, loss0: float):
        self.cfg = cfg
        self.trace = [float(loss0)]
        self.flagged = 0

    def initial_stop(self, grad) -> str | None:
        return self._check(self.trace[0], grad)

    def _check(self, loss, grad) -> str | None:
        if loss <= self.cfg.loss_tol:
            return STOP_LOSS_TOL
        if grad is not None and float(np.max(np.abs(grad))) <= self.cfg.grad_tol:
            return STOP_GRAD_TOL
        return None

    def end_epoch(self, loss, grad) -> str | None:
        self.trace.append(float(loss))
        return self._check(loss, grad)

    def report(self, reason: str, objective_steps=None) -> TrainReport:
        return TrainReport(
            final_loss=self.trace[-1],
            epochs_run=len(self.trace) - 1,
            stop_reason=reason,
            loss_trace=tuple(self.trace),
            objective_steps=tuple(objective_steps) if objective_steps is not None else None,
            flagged_line_searches=self.flagged,
        )


def _run_gd(obj, theta0, cfg: TrainConfig, momentum_on: bool, adaptive: bool):
    theta = np.array(theta0, dtype=float)
    loss, grad = obj.loss_grad(theta)
    run = _Run(cfg, loss)
    reason = run.initial_stop(grad)
    if reason:
        return theta, run.report(reason)
    state = GdState(cfg.lr, np.zeros_like(theta))
    m = cfg.momentum if momentum_on else 0.0
    # Step with the per-sample mean gradient so lr does not rescale with N.
    scale = 1.0 / max(1, getattr(obj, "n_residuals", 1))
    for _ in range(1, cfg.effective_max_epochs + 1):
        cand, proposed = gd_step(theta, grad * scale, state, momentum=m)
        cand_loss, cand_grad = obj.loss_grad(cand)
        if adaptive:
            accepted, state = gd_adapt(
                proposed, loss, cand_loss, cfg.lr_inc, cfg.lr_dec, cfg.max_loss_rise
            )
            if accepted:
                theta, loss, grad = cand, cand_loss, cand_grad
        else:
            if not math.isfinite(cand_loss):
                return theta, run.report(STOP_NUMERICAL)
            theta, loss, grad = cand, cand_loss, cand_grad
            state = proposed
        reason = run.end_epoch(loss, grad)
        if reason:
            return theta, run.report(reason)
    return theta, run.report(STOP_MAX_EPOCHS)


def _run_rprop(obj, theta0, cfg: TrainConfig):
    theta = np.array(theta0, dtype=float)
    loss, grad = obj.loss_grad(theta)
    run = _Run(cfg, loss)
    reason = run.initial_stop(grad)
    if reason:
        return theta, run.report(reason)
    state = RpropState(np.full_like(theta, cfg.rprop.delta0), np.zeros_like(theta))
    for _ in range(1, cfg.effective_max_epochs + 1):
        cand, new_state = rprop_step(theta, grad, state, cfg.rprop)
        cand_loss, cand_grad = obj.loss_grad(cand)
        if not math.isfinite(cand_loss):
            return theta, run.report(STOP_NUMERICAL)
        theta, loss, grad, state = cand, cand_loss, cand_grad, new_state
        reason = run.end_epoch(loss, grad)
        if reason:
            return theta, run.report(reason)
    return theta, run.report(STOP_MAX_EPOCHS)


def _make_phi(obj, theta, direction):
    def phi(alpha):
        val, g = obj.loss_grad(theta + alpha * direction)
        return val, float(g @ direction), g

    return phi


def _run_cg(obj, theta0, cfg: TrainConfig, variant: str):
    theta = np.array(theta0, dtype=float)
    loss, grad = obj.loss_grad(theta)
    run = _Run(cfg, loss)
    reason = run.initial_stop(grad)
    if reason:
        return theta, run.report(reason)
    prev_grad = prev_dir = None
    alpha_prev = d0_prev = None
    for _ in range(1, cfg.effective_max_epochs + 1):
        direction = cg_direction(grad, prev_grad, prev_dir, variant)
        d0 = float(direction @ grad)
        if d0 >= 0.0:
            direction = -grad
            d0 = -float(grad @ grad)
            if d0 == 0.0:
                return theta, run.report(STOP_GRAD_TOL)
        init = 1.0
        if alpha_prev is not None and d0 != 0.0:
            init = min(max(alpha_prev * d0_prev / d0, 1e-12), 1e12)
        try:
            res = wolfe_search(_make_phi(obj, theta, direction), loss, d0, c2=0.1, init=init)
        except LineSearchFailure:
            return theta, run.report(STOP_NUMERICAL)
        run.flagged += res.flagged
        prev_grad, prev_dir = grad, direction
        alpha_prev, d0_prev = res.alpha, d0
        theta = theta + res.alpha * direction
        loss, grad = res.value, res.payload
        reason = run.end_epoch(loss, grad)
        if reason:
            return theta, run.report(reason)
    return theta, run.report(STOP_MAX_EPOCHS)


def _run_quasi_newton(obj, theta0, cfg: TrainConfig, variant: str):
    theta = np.array(theta0, dtype=float)
    loss, grad = obj.loss_grad(theta)
    run = _Run(cfg, loss)
    reason = run.initial_stop(grad)
    if reason:
        return theta, run.report(reason)
    state = QuasiNewtonState(variant)
    for _ in range(1, cfg.effective_max_epochs + 1):
        direction, state = quasi_newton_step(state, grad, variant)
        d0 = float(direction @ grad)
        if d0 >= 0.0:
            direction = -grad
            d0 = -float(grad @ grad)
            if d0 == 0.0:
                return theta, run.report(STOP_GRAD_TOL)
        try:
            res = wolfe_search(_make_phi(obj, theta, direction), loss, d0, c2=0.9)
        except LineSearchFailure:
            return theta, run.report(STOP_NUMERICAL)
        run.flagged += res.flagged
        step = res.alpha * direction
        state.s, state.y = step, res.payload - grad
        theta = theta + step
        loss, grad = res.value, res.payload
        reason = run.end_epoch(loss, grad)
        if reason:
            return theta, run.report(reason)
    return theta, run.report(STOP_MAX_EPOCHS)


@dataclass
class ScgState:
    theta: np.ndarray
    loss: float
    grad: np.ndarray
    direction: np.ndarray
    lam: float
    lam_bar: float = 0.0
    success: bool = True
    delta: float = 0.0
    accepted_since_restart: int = 0
    last_accepted: bool = True


def scg_init(obj, theta0, cfg: TrainConfig) -> ScgState:
    theta = np.array(theta0, dtype=float)
    loss, grad = obj.loss_grad(theta)
    return ScgState(theta=theta, loss=loss, grad=grad, direction=-grad, lam=cfg.scg_lambda)


def scg_step(obj, st: ScgState, cfg: TrainConfig) -> ScgState:
    """One iteration of the scaled conjugate gradient method.

    Curvature along the direction comes from a finite difference of
    gradients; no line search is performed.  Non-finite curvature restarts
    from steepest descent with the damping doubled.
    """
    p = st.direction
    norm_p2 = float(p @ p)
    if norm_p2 == 0.0:
        return replace(st, last_accepted=False)
    if st.success:
        sigma = cfg.scg_sigma / math.sqrt(norm_p2)
        _, g_plus = obj.loss_grad(st.theta + sigma * p)
        s_vec = (g_plus - st.grad) / sigma
        st.delta = float(p @ s_vec)
        if not math.isfinite(st.delta):
            return ScgState(
                theta=st.theta,
                loss=st.loss,
                grad=st.grad,
                direction=-st.grad,
                lam=min(st.lam * 2.0, 1e100),
                last_accepted=False,
            )
    delta = st.delta + (st.lam - st.lam_bar) * norm_p2
    lam, lam_bar = st.lam, st.lam_bar
    if delta <= 0.0:  # negative curvature: raise damping until positive definite
        lam_bar = 2.0 * (lam - delta / norm_p2)
        delta = -delta + lam * norm_p2
        lam = lam_bar
    r = -st.grad
    mu = float(p @ r)
    alpha = mu / delta
    cand = st.theta + alpha * p
    cand_loss = obj.loss(cand)
    if math.isfinite(cand_loss) and mu != 0.0:
        comparison = 2.0 * delta * (st.loss - cand_loss) / (mu * mu)
    else:
        comparison = -1.0
    if comparison >= 0.0:
        new_loss, new_grad = obj.loss_grad(cand)
        r_new = -new_grad
        count = st.accepted_since_restart + 1
        if count >= len(st.theta):
            direction, count = r_new, 0
        else:
            beta = (float(r_new @ r_new) - float(r_new @ r)) / mu
            direction = r_new + beta * p
        if comparison >= 0.75:
            lam *= 0.5
        if comparison < 0.25:
            lam *= 4.0
        return ScgState(
            theta=cand,
            loss=new_loss,
            grad=new_grad,
            direction=direction,
            lam=min(lam, 1e100),
            lam_bar=0.0,
            success=True,
            delta=delta,
            accepted_since_restart=count,
            last_accepted=True,
        )
    # Rejected step: remember the damping already folded into delta so the
    # next pass only adds the increment, then raise the damping.
    lam_bar = lam
    lam = min(lam * 4.0, 1e100)
    return ScgState(
        theta=st.theta,
        loss=st.loss,
        grad=st.grad,
        direction=p,
        lam=lam,
        lam_bar=lam_bar,
        success=False,
        delta=delta,
        accepted_since_restart=st.accepted_since_restart,
        last_accepted=False,
    )


def _run_scg(obj, theta0, cfg: TrainConfig):
    st = scg_init(obj, theta0, cfg)
    run = _Run(cfg, st.loss)
    reason = run.initial_stop(st.grad)
    if reason:
        return st.theta, run.report(reason)
    for _ in range(1, cfg.effective_max_epochs + 1):
        st = scg_step(obj, st, cfg)
        reason = run.end_epoch(st.loss, st.grad)
        if reason:
            return st.theta, run.report(reason)
    return st.theta, run.report(STOP_MAX_EPOCHS)


def _run_lm(obj, theta0, cfg: TrainConfig):
    theta = np.array(theta0, dtype=float)
    r, jac = obj.residuals_jacobian(theta)
    loss = 0.5 * float(r @ r)
    grad = jac.T @ r
    run = _Run(cfg, loss)
    reason = run.initial_stop(grad)
    if reason:
        return theta, run.report(reason)
    mu = cfg.mu_init
    for _ in range(1, cfg.effective_max_epochs + 1):
        jtj = jac.T @ jac
        accepted = False
        while mu <= cfg.mu_max:
            att = _lm_attempt(obj, theta, loss, jtj, grad, mu, cfg.mu_inc, cfg.mu_dec)
            mu = att.mu
            if att.accepted:
                theta, loss = att.theta, att.loss
                accepted = True
                break
        if not accepted:
            return theta, run.report(STOP_MU_OVERFLOW)
        r, jac = obj.residuals_jacobian(theta)
        loss = 0.5 * float(r @ r)
        grad = jac.T @ r
        reason = run.end_epoch(loss, grad)
        if reason:
            return theta, run.report(reason)
    return theta, run.report(STOP_MAX_EPOCHS)


def _run_lmbr(obj, theta0, cfg: TrainConfig):
    theta = np.array(theta0, dtype=float)
    alpha, beta = 0.0, 1.0
    r, jac = obj.residuals_jacobian(theta)
    e_data = 0.5 * float(r @ r)
    e_weights = 0.5 * float(theta @ theta)
    jtj = jac.T @ jac
    grad_f = beta * (jac.T @ r) + alpha * theta
    objective = beta * e_data + alpha * e_weights
    run = _Run(cfg, e_data)
    reason = run.initial_stop(grad_f)
    if reason:
        return theta, run.report(reason, objective_steps=())
    mu = cfg.mu_init
    steps: list[tuple[float, float]] = []
    n_res = obj.n_residuals
    p = len(theta)
    for _ in range(1, cfg.effective_max_epochs + 1):
        accepted = False
        while mu <= cfg.mu_max:
            a = beta * jtj
            a.flat[:: p + 1] += alpha + mu
            try:
                delta = np.linalg.solve(a, -grad_f)
            except np.linalg.LinAlgError:
                mu *= cfg.mu_inc
                continue
            if not np.all(np.isfinite(delta)):
                mu *= cfg.mu_inc
                continue
            cand = theta + delta
            cand_data = obj.loss(cand)
            cand_obj = beta * cand_data + alpha * 0.5 * float(cand @ cand)
            if math.isfinite(cand_obj) and cand_obj <= objective:
                steps.append((objective, cand_obj))
                theta = cand
                mu = max(mu * cfg.mu_dec, 1e-300)
                accepted = True
                break
            mu *= cfg.mu_inc
        if not accepted:
            return theta, run.report(STOP_MU_OVERFLOW, objective_steps=steps)
        r, jac = obj.residuals_jacobian(theta)
        jtj = jac.T @ jac
        e_data = 0.5 * float(r @ r)
        e_weights = 0.5 * float(theta @ theta)
        # Evidence re-estimation once per accepted step (damping folded in
        # so the inverted matrix is safely positive definite).
        hessian = 2.0 * beta * jtj
        hessian.flat[:: p + 1] += 2.0 * (alpha + mu)
        upd = bayes_hyperparam_update(e_data, e_weights, theta, hessian, alpha, n_res)
        alpha, beta = upd.alpha, upd.beta
        objective = beta * e_data + alpha * e_weights
        grad_f = beta * (jac.T @ r) + alpha * theta
        reason = run.end_epoch(e_data, grad_f)
        if reason:
            return theta, run.report(reason, objective_steps=steps)
    return theta, run.report(STOP_MAX_EPOCHS, objective_steps=steps)


def minimize(objective, theta0, cfg: TrainConfig):
    """Run the configured algorithm on any objective exposing loss/loss_grad
    (plus residuals_jacobian for the Levenberg-Marquardt pair)."""
    algo = cfg.algorithm
    if algo == "LM":
        return _run_lm(objective, theta0, cfg)
    if algo == "LMbr":
        return _run_lmbr(objective, theta0, cfg)
    if algo == "GD":
        return _run_gd(objective, theta0, cfg, momentum_on=False, adaptive=False)
    if algo == "GDm":
        return _run_gd(objective, theta0, cfg, momentum_on=True, adaptive=False)
    if algo == "GDa":
        return _run_gd(objective, theta0, cfg, momentum_on=False, adaptive=True)
    if algo == "GDma":
        return _run_gd(objective, theta0, cfg, momentum_on=True, adaptive=True)
    if algo in ("CGpb", "CGfr", "CGpr"):
        return _run_cg(objective, theta0, cfg, variant=algo[2:].upper())
    if algo == "SCG":
        return _run_scg(objective, theta0, cfg)
    if algo in ("BFGS", "OSS"):
        return _run_quasi_newton(objective, theta0, cfg, variant=algo)
    if algo == "RBP":
        return _run_rprop(objective, theta0, cfg)
    raise ValueError(f"unknown algorithm {algo!r}")


def train(net: Network, batch, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    """Train a network on a batch with the configured algorithm.

    Returns the trained network and a report; numerical failures terminate
    with the last finite iterate rather than raising.
    """
    X, Y = _as_batch(net, batch)
    if Y.shape[1] != net.output_dim:
        raise ValueError(f"targets have {Y.shape[1]} columns, network emits {net.output_dim}")
    obj = NetworkObjective(net.wiring, X, Y)
    theta, report = minimize(obj, net.theta, cfg)
    return net.with_theta(theta), report

"""Prediction-correction tracking: C-FOPC and U-FOPC.

The prediction step extrapolates the current iterate to the next sampling
time using a first-order model of the gradient frozen at ``(x_k, t_k)``; the
correction step runs projected gradient on the newly revealed objective.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .oracle import TrackingRun
from .problem import WholeSpace

ANALYTIC = "analytic"
BACKWARD = "backward"


class DivergenceError(RuntimeError):
    """A non-finite iterate appeared; ``step`` is the outer index k."""

    def __init__(self, message, step=None, run=None):
        super().__init__(message)
        self.step = step
        self.run = run


@dataclass(frozen=True)
class SolverConfig:
    """Stepsizes and step counts of a prediction-correction run.

    ``P`` may be ``math.inf`` for exact prediction. ``gamma`` only affects
    the unconstrained driver. When ``P == 0``, ``extra_corrections`` more
    correction steps on f(.; t_k) are run after x_k has been recorded, and
    their result seeds the next correction phase (the correction plus extra
    correction strategy of budgeted comparisons).
    """

    alpha: float
    beta: float
    P: float = 1
    C: int = 1
    gamma: float = 1.0
    derivative_mode: str = ANALYTIC
    exact_prediction_tol: Optional[float] = None
    exact_prediction_max_iters: Optional[int] = None
    extra_corrections: int = 0

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta > 0:
            raise ValueError("stepsizes alpha and beta must be positive")
        if not (self.P == math.inf or (float(self.P).is_integer() and self.P >= 0)):
            raise ValueError(f"P must be a non-negative integer or inf, got {self.P}")
        if not (float(self.C).is_integer() and self.C >= 0):
            raise ValueError(f"C must be a non-negative integer, got {self.C}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.derivative_mode not in (ANALYTIC, BACKWARD):
            raise ValueError(f"unknown derivative_mode {self.derivative_mode!r}")
        if self.exact_prediction_tol is not None and not self.exact_prediction_tol > 0:
            raise ValueError("exact_prediction_tol must be positive")
        if self.exact_prediction_max_iters is not None and self.exact_prediction_max_iters < 1:
            raise ValueError("exact_prediction_max_iters must be >= 1")
        if self.extra_corrections < 0:
            raise ValueError("extra_corrections must be >= 0")

    @property
    def exact(self):
        return self.P == math.inf


@dataclass
class PredictionState:
    x_k: np.ndarray
    grad_k: np.ndarray
    tdx_k: np.ndarray
    t_k: float
    h: float


def _check_finite(x, what, step=None):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite iterate in {what}", step=step)
    return x


def approx_mixed_derivative(grad_now, grad_prev, h):
    """Backward difference estimate of the time derivative of the gradient."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    return (np.asarray(grad_now, dtype=float) - np.asarray(grad_prev, dtype=float)) / h


def _frozen_hvp(problem, st):
    x_k, t_k = st.x_k, st.t_k
    return lambda v: problem.hessian_vec(x_k, t_k, v)


def predict_constrained(problem, feasible_set, st, alpha, P):
    """``P`` projected gradient steps on the frozen prediction model.

    x^{p+1} = Proj(x^p - alpha (H_k (x^p - x_k) + h tdx_k + g_k)), x^0 = x_k.
    """
    if P < 0 or P == math.inf:
        raise ValueError(f"P must be a finite non-negative integer, got {P}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    hvp = _frozen_hvp(problem, st)
    offset = st.h * st.tdx_k + st.grad_k
    x = np.array(st.x_k, dtype=float)
    for _ in range(int(P)):
        x = feasible_set.project(x - alpha * (hvp(x - st.x_k) + offset))
        _check_finite(x, "prediction")
    return x


def predict_unconstrained(problem, st, alpha, P, gamma):
    """Unconstrained prediction with the gradient term scaled by ``gamma``.

    With ``gamma = 1`` this performs exactly the same floating point
    operations as :func:`predict_constrained` on the whole space.
    """
    if P < 0 or P == math.inf:
        raise ValueError(f"P must be a finite non-negative integer, got {P}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    hvp = _frozen_hvp(problem, st)
    offset = st.h * st.tdx_k + gamma * st.grad_k
    x = np.array(st.x_k, dtype=float)
    for _ in range(int(P)):
        x = x - alpha * (hvp(x - st.x_k) + offset)
        _check_finite(x, "prediction")
    return x


def predict_exact(problem, feasible_set, st, gamma=1.0, tol=None, max_iters=None, closed_form=True):
    """Solve the prediction subproblem to tolerance.

    On the whole space with ``closed_form=True`` the Newton-like solution
    ``x_k - H_k^{-1}(h tdx_k + gamma g_k)`` is returned. Otherwise the
    projected gradient iteration with stepsize 1/L runs until successive
    iterates move by at most ``tol``. Returns ``(x, converged)``; failure to
    converge only warns.
    """
    c = problem.constants
    offset = st.h * st.tdx_k + gamma * st.grad_k
    if closed_form and isinstance(feasible_set, WholeSpace):
        H = problem.hessian(st.x_k, st.t_k)
        x = st.x_k - np.linalg.solve(H, offset)
        return _check_finite(x, "exact prediction"), True
    if tol is None:
        tol = 1e-10 * (1.0 + np.linalg.norm(st.x_k))
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iters is None:
        max_iters = 10 * math.ceil(c.L / c.m) * math.ceil(-math.log(tol))
    hvp = _frozen_hvp(problem, st)
    step = 1.0 / c.L
    x = np.array(st.x_k, dtype=float)
    for _ in range(max_iters):
        x_new = feasible_set.project(x - step * (hvp(x - st.x_k) + offset))
        _check_finite(x_new, "exact prediction")
        if np.linalg.norm(x_new - x) <= tol:
            return x_new, True
        x = x_new
    warnings.warn("exact prediction did not reach tolerance", RuntimeWarning, stacklevel=2)
    return x, False


def correct(problem, feasible_set, x_start, t_next, beta, C):
    """``C`` projected gradient steps on f(.; t_next); gradient re-evaluated each step."""
    if C < 0:
        raise ValueError("C must be non-negative")
    if not beta > 0:
        raise ValueError("beta must be positive")
    x = np.array(x_start, dtype=float)
    for _ in range(int(C)):
        x = feasible_set.project(x - beta * problem.gradient(x, t_next))
        _check_finite(x, "correction")
    return x


def _mixed(problem, x_k, t_k, grad_k, grad_prev, h, mode):
    if mode == ANALYTIC:
        tdx = problem.mixed_derivative(x_k, t_k)
        if tdx is None:
            raise ValueError("problem has no analytic mixed derivative; use derivative_mode='backward'")
        return np.asarray(tdx, dtype=float)
    return approx_mixed_derivative(grad_k, grad_prev, h)


def _run(problem, feasible_set, grid, cfg, x0, reference, constrained):
    L = problem.constants.L
    if cfg.alpha >= 2.0 / L or cfg.beta >= 2.0 / L:
        warnings.warn("stepsize >= 2/L: no contraction certificate", RuntimeWarning, stacklevel=3)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.dim},)")
    corr_set = feasible_set if constrained else WholeSpace(problem.dim)
    if constrained and not feasible_set.contains(x0):
        warnings.warn("x0 outside the feasible set; projecting", RuntimeWarning, stacklevel=3)
        x0 = feasible_set.project(x0)

    n, K, h = problem.dim, grid.k_max, grid.h
    iterates = np.full((K + 1, n), np.nan)
    predicted = np.full((K + 1, n), np.nan)
    iterates[0] = predicted[0] = x0
    run = TrackingRun(grid=grid, config=cfg, iterates=iterates, predicted=predicted)
    run.flags["constrained"] = constrained
    run.flags["exact_not_converged"] = 0

    x = x0
    grad_prev = None
    k = 0
    try:
        for k in range(K):
            t_k = grid.time(k)
            predicting = cfg.P != 0
            if predicting or cfg.derivative_mode == BACKWARD:
                grad_k = problem.gradient(x, t_k)
            if predicting:
                prev = grad_k if grad_prev is None else grad_prev
                tdx = _mixed(problem, x, t_k, grad_k, prev, h, cfg.derivative_mode)
                st = PredictionState(x_k=x, grad_k=grad_k, tdx_k=tdx, t_k=t_k, h=h)
                gamma = 1.0 if constrained else cfg.gamma
                if cfg.exact:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        x_pred, ok = predict_exact(
                            problem, corr_set, st, gamma=gamma,
                            tol=cfg.exact_prediction_tol,
                            max_iters=cfg.exact_prediction_max_iters,
                        )
                    if not ok:
                        run.flags["exact_not_converged"] += 1
                elif constrained:
                    x_pred = predict_constrained(problem, feasible_set, st, cfg.alpha, cfg.P)
                else:
                    x_pred = predict_unconstrained(problem, st, cfg.alpha, cfg.P, cfg.gamma)
            elif cfg.extra_corrections:
                x_pred = correct(problem, corr_set, x, t_k, cfg.beta, cfg.extra_corrections)
            else:
                x_pred = x
            if cfg.derivative_mode == BACKWARD:
                grad_prev = grad_k
            x = correct(problem, corr_set, x_pred, grid.time(k + 1), cfg.beta, cfg.C)
            predicted[k + 1] = x_pred
            iterates[k + 1] = x
    except DivergenceError as err:
        run.diverged_at = k + 1
        raise DivergenceError(f"diverged at step {k + 1}: {err}", step=k + 1, run=run) from err
    if run.flags["exact_not_converged"]:
        warnings.warn(
            f"exact prediction hit its iteration cap {run.flags['exact_not_converged']} times",
            RuntimeWarning, stacklevel=3,
        )
    if reference is not None:
        run.attach_reference(reference)
    return run


def run_cfopc(problem, feasible_set, grid, cfg, x0, reference=None):
    """Constrained first-order prediction-correction over ``grid``.

    ``reference`` (x*(t_k) for k = 0..k_max) is optional; when given the
    error series are filled in. Raises :class:`DivergenceError` carrying the
    partial run on non-finite iterates.
    """
    return _run(problem, feasible_set, grid, cfg, x0, reference, constrained=True)


def run_ufopc(problem, grid, cfg, x0, reference=None):
    """Unconstrained prediction-correction with the ``gamma`` dial."""
    return _run(problem, WholeSpace(problem.dim), grid, cfg, x0, reference, constrained=False)


def run_tracking(problem, feasible_set, grid, cfg, x0, reference=None, constrained=None):
    """Dispatch to the constrained or unconstrained driver.

    By default the unconstrained driver is used on the whole space and the
    constrained one otherwise.
    """
    if constrained is None:
        constrained = not isinstance(feasible_set, WholeSpace)
    if constrained:
        return run_cfopc(problem, feasible_set, grid, cfg, x0, reference)
    return run_ufopc(problem, grid, cfg, x0, reference)


def with_counts(cfg, P=None, C=None, **kw):
    """Copy of ``cfg`` with new step counts."""
    changes = dict(kw)
    if P is not None:
        changes["P"] = P
    if C is not None:
        changes["C"] = C
    return replace(cfg, **changes)

"""Error metrics, sampling-period sweeps, compute budgets and envelope checks."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import certify, error_envelope, taylor_error_bounds
from .oracle import reference_trajectory
from .problem import SamplingGrid, WholeSpace
from .solvers import DivergenceError, PredictionState, SolverConfig, predict_exact, run_tracking


def default_k_bar(k_max):
    """Burn-in index: max(100, k_max // 2), kept below k_max."""
    return min(max(100, k_max // 2), k_max - 1)


def asymptotic_error(run, k_bar=None):
    """Worst tracking error after the burn-in index ``k_bar``; inf if diverged."""
    k_max = run.grid.k_max
    if k_bar is None:
        k_bar = default_k_bar(k_max)
    if not k_bar < k_max:
        raise ValueError(f"k_bar={k_bar} must be below k_max={k_max}")
    if run.diverged:
        return math.inf
    if run.errors is None:
        raise ValueError("run has no reference attached")
    return float(np.max(run.errors[k_bar + 1:]))


def settling_step(errors, band, rel=0.10):
    """First k after which every error stays within (1 + rel) * band."""
    errors = np.asarray(errors)
    above = np.flatnonzero(errors > (1 + rel) * band)
    return 0 if above.size == 0 else int(above[-1]) + 1


def fit_loglog_slope(h, err):
    """Least-squares fit of log(err) = slope log(h) + intercept.

    Non-finite or non-positive errors are dropped. Returns
    ``(slope, intercept, residuals)`` with residuals aligned to the input
    (NaN where dropped).
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = np.isfinite(err) & (err > 0)
    if ok.sum() < 2:
        return math.nan, math.nan, np.full(h.shape, np.nan)
    x, y = np.log(h[ok]), np.log(err[ok])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = np.full(h.shape, np.nan)
    resid[ok] = y - (slope * x + intercept)
    return float(slope), float(intercept), resid


@dataclass
class SweepResult:
    name: str
    h: np.ndarray
    errors: np.ndarray
    reports: list
    configs: list
    slope: float
    intercept: float
    residuals: np.ndarray
    failures: dict = field(default_factory=dict)


def _resolve(cfg, h):
    return cfg(h) if callable(cfg) else cfg


def grid_for(h, horizon, t0=0.0):
    return SamplingGrid.covering(h, horizon, t0)


def sweep_h(problem, feasible_set, configs, h_list, horizon, x0, k_bar=None,
            constrained=None, tau=None, oracle_tol=None):
    """Run every config at every sampling period and fit log-log slopes.

    ``configs`` maps a variant name to a :class:`SolverConfig` or to a
    callable ``h -> SolverConfig``. The oracle trajectory is computed once
    per ``h`` and shared. ``k_bar`` may be an int or a callable of k_max.
    Diverged runs are recorded in ``failures`` and excluded from the fit.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("need at least 3 sampling periods")
    if any(b <= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly increasing")
    if constrained is None:
        constrained = not isinstance(feasible_set, WholeSpace)
    x0 = np.asarray(x0, dtype=float)
    out = {name: dict(errors=[], reports=[], configs=[], failures={}) for name in configs}
    for h in h_list:
        grid = grid_for(h, horizon)
        ref = reference_trajectory(problem, feasible_set, grid, x0, tol=oracle_tol)
        kb = k_bar(grid.k_max) if callable(k_bar) else (k_bar if k_bar is not None else default_k_bar(grid.k_max))
        gap = float(np.linalg.norm(feasible_set.project(x0) - ref[0]))
        for name, spec in configs.items():
            cfg = _resolve(spec, h)
            rec = out[name]
            rec["configs"].append(cfg)
            gamma = None if constrained else cfg.gamma
            rec["reports"].append(
                certify(problem.constants, cfg.alpha, cfg.beta, cfg.P, cfg.C, h,
                        gamma=gamma, tau=tau, initial_gap=gap))
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    run = run_tracking(problem, feasible_set, grid, cfg, x0, ref, constrained)
                rec["errors"].append(asymptotic_error(run, kb))
            except DivergenceError as err:
                rec["errors"].append(math.inf)
                rec["failures"][h] = str(err)
    results = {}
    for name, rec in out.items():
        err = np.array(rec["errors"])
        slope, icpt, resid = fit_loglog_slope(h_list, err)
        results[name] = SweepResult(
            name=name, h=np.array(h_list), errors=err, reports=rec["reports"],
            configs=rec["configs"], slope=slope, intercept=icpt, residuals=resid,
            failures=rec["failures"],
        )
    return results


# -- compute budgets ------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetPlan:
    """Step counts affordable within one sampling period.

    ``C`` corrections fit in ``r1 h``; in the remaining ``r2 h`` either
    ``P`` prediction steps (after a fixed setup cost ``t_bar``) or ``C_extra``
    extra corrections fit. ``C_total`` uses the whole period for correction.
    """

    h: float
    r1: float
    r2: float
    t_C: float
    t_P: float
    t_bar: float
    C: int
    C_extra: int
    P: int
    C_total: int
    prediction_affordable: bool


def allocate_budget(h, r1=0.5, r2=0.5, t_C=0.76e-3, t_P=0.62e-3, t_bar=10e-3):
    """Number of correction / prediction steps that fit in a period ``h``.

    All times share a unit (seconds by default). Prediction is affordable
    when at least one prediction step fits after the setup cost.
    """
    if not (h > 0 and t_C > 0 and t_P > 0 and t_bar >= 0):
        raise ValueError("h, t_C, t_P must be positive and t_bar non-negative")
    if not (0 <= r1 <= 1 and 0 <= r2 <= 1):
        raise ValueError("r1, r2 must lie in [0, 1]")
    # tiny slack so that exact ratios such as 0.5*0.006/0.00075 do not floor down
    eps = 1e-9
    C = int(math.floor(r1 * h / t_C + eps))
    C_extra = int(math.floor(r2 * h / t_C + eps))
    C_total = int(math.floor(h / t_C + eps))
    raw_P = math.floor((r2 * h - t_bar) / t_P + eps)
    P = max(0, int(raw_P))
    return BudgetPlan(h=h, r1=r1, r2=r2, t_C=t_C, t_P=t_P, t_bar=t_bar, C=C,
                      C_extra=C_extra, P=P, C_total=C_total,
                      prediction_affordable=P >= 1)


STRATEGIES = ("prediction-correction", "correction+extra", "total-correction")

def budget_configs(plan, alpha, beta):
    """Solver configs of the three budgeted strategies (None if unaffordable)."""
    pc = SolverConfig(alpha=alpha, beta=beta, P=plan.P, C=plan.C) if plan.prediction_affordable else None
    ce = SolverConfig(alpha=alpha, beta=beta, P=0, C=plan.C, extra_corrections=plan.C_extra)
    tc = SolverConfig(alpha=alpha, beta=beta, P=0, C=plan.C_total)
    return dict(zip(STRATEGIES, (pc, ce, tc)))


@dataclass
class BudgetRow:
    strategy: str
    h: float
    P: int
    C: int
    asymptotic_error: float
    affordable: bool
    certified: bool


def budget_sweep(problem, feasible_set, h_list, alpha, beta, horizon, x0,
                 r1=0.5, r2=0.5, t_C=0.76e-3, t_P=0.62e-3, t_bar=10e-3, k_bar=None):
    """Compare the three budgeted strategies over sampling periods.

    Unaffordable prediction-correction rows carry ``nan`` errors.
    """
    rows = []
    x0 = np.asarray(x0, dtype=float)
    for h in h_list:
        plan = allocate_budget(h, r1, r2, t_C, t_P, t_bar)
        grid = grid_for(h, horizon)
        ref = reference_trajectory(problem, feasible_set, grid, x0)
        kb = k_bar if k_bar is not None else default_k_bar(grid.k_max)
        for name, cfg in budget_configs(plan, alpha, beta).items():
            if cfg is None:
                rows.append(BudgetRow(name, h, 0, plan.C, math.nan, False, False))
                continue
            rep = certify(problem.constants, alpha, beta, cfg.P, cfg.C, h)
            try:
                run = run_tracking(problem, feasible_set, grid, cfg, x0, ref, constrained=True)
                err = asymptotic_error(run, kb)
            except DivergenceError:
                err = math.inf
            rows.append(BudgetRow(name, h, int(cfg.P), int(cfg.C), err, True, rep.certified))
    return rows


# -- envelopes and prediction error ---------------------------------------------------


@dataclass
class EnvelopeResult:
    passed: bool
    first_violation: Optional[int]
    margins: np.ndarray
    envelope: np.ndarray


def envelope_series(report, initial_gap, k_max):
    return np.array([error_envelope(report, initial_gap, k) for k in range(k_max + 1)])


def envelope_check(run, report, tol=1e-8):
    """Check ``e_k <= envelope(k) + tol`` along a run.

    Raises ValueError for uncertified reports: that is a precondition, not a
    verdict.
    """
    if not report.certified:
        raise ValueError("envelope check needs a certified report")
    if run.errors is None:
        raise ValueError("run has no reference attached")
    env = envelope_series(report, float(run.errors[0]), run.grid.k_max)
    margins = env + tol - run.errors
    bad = np.flatnonzero(~(margins >= 0))
    first = int(bad[0]) if bad.size else None
    return EnvelopeResult(passed=first is None, first_violation=first, margins=margins, envelope=env)


@dataclass
class PredictionErrorResult:
    h: float
    errors: np.ndarray
    delta2: float
    worst_ratio: float

    @property
    def max_error(self):
        return float(np.max(self.errors))


def prediction_error_check(problem, feasible_set, grid, x_warm=None, reference=None, atol=1e-9):
    """Distance of the exact prediction from each oracle point to the next one.

    For every k, the exact (gamma = 1) prediction is made from x*(t_k) with
    the analytic mixed derivative and compared to x*(t_{k+1}). The worst
    ratio against the second order Taylor bound is returned. When the bound
    is zero the ratio is 0 if every error is within the oracle noise floor
    ``atol`` and inf otherwise.
    """
    c = problem.constants
    if not c.has_third_order:
        raise ValueError("prediction error check needs C1, C2, C3")
    if reference is None:
        x_warm = np.zeros(problem.dim) if x_warm is None else x_warm
        reference = reference_trajectory(problem, feasible_set, grid, x_warm)
    h = grid.h
    errs = np.empty(grid.k_max)
    for k in range(grid.k_max):
        xk, tk = reference[k], grid.time(k)
        tdx = problem.mixed_derivative(xk, tk)
        if tdx is None:
            raise ValueError("prediction error check needs an analytic mixed derivative")
        st = PredictionState(x_k=xk, grad_k=problem.gradient(xk, tk), tdx_k=tdx, t_k=tk, h=h)
        xp, _ = predict_exact(problem, feasible_set, st, gamma=1.0)
        errs[k] = np.linalg.norm(xp - reference[k + 1])
    _, d2 = taylor_error_bounds(c.m, c.L, c.C0, h, c.C1, c.C2, c.C3)
    worst = float(np.max(errs) / d2) if d2 > 0 else (0.0 if np.max(errs) <= atol else math.inf)
    return PredictionErrorResult(h=h, errors=errs, delta2=d2, worst_ratio=worst)


# -- CSV output -----------------------------------------------------------------


def fmt(v):
    """Round-trip decimal formatting; empty string for None."""
    if v is None:
        return ""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


RUN_HEADER = ("k", "t", "error", "pred_error", "certified_envelope")


def write_run_csv(run, path, report=None):
    env = None
    if report is not None and report.certified:
        env = envelope_series(report, float(run.errors[0]), run.grid.k_max)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_HEADER)
        for k in range(run.grid.k_max + 1):
            w.writerow([k, fmt(run.grid.time(k)), fmt(run.errors[k]), fmt(run.pred_errors[k]),
                        "" if env is None else fmt(env[k])])

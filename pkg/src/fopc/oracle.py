"""Reference optimizers x*(t) and the per-run tracking record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

ORACLE_MAX_ITERS = 10_000_000


class OracleError(RuntimeError):
    pass


def oracle_optimizer(problem, feasible_set, t, x_warm, tol=None, max_iters=ORACLE_MAX_ITERS):
    """High-accuracy minimizer of f(.; t) over ``feasible_set``.

    Projected gradient with stepsize 1/L from ``x_warm``, stopped once the
    fixed-point residual ``||x - P(x - g/L)||`` is at most ``tol``. The
    default tolerance is ``1e-11 * (1 + ||x||)``, re-evaluated at the current
    iterate.
    """
    if tol is not None and not tol > 0:
        raise ValueError(f"oracle tolerance must be positive, got {tol}")
    step = 1.0 / problem.constants.L
    x = feasible_set.project(np.asarray(x_warm, dtype=float))
    project, grad = feasible_set.project, problem.gradient
    for _ in range(max_iters):
        x_new = project(x - step * grad(x, t))
        d = x - x_new
        res = math.sqrt(d @ d)
        bound = tol if tol is not None else 1e-11 * (1.0 + math.sqrt(x @ x))
        if res <= bound:
            return x
        if not math.isfinite(res):
            raise OracleError(f"oracle produced non-finite iterate at t={t}")
        x = x_new
    raise OracleError(f"oracle iteration cap {max_iters} reached at t={t}")


def reference_trajectory(problem, feasible_set, grid, x_warm, tol=None):
    """x*(t_k) for k = 0..k_max, warm-started along the grid."""
    out = np.empty((grid.k_max + 1, problem.dim))
    x = np.asarray(x_warm, dtype=float)
    for k in range(grid.k_max + 1):
        x = oracle_optimizer(problem, feasible_set, grid.time(k), x, tol=tol)
        out[k] = x
    return out


@dataclass
class TrackingRun:
    """Record of one tracking run.

    ``iterates[k]`` is x_k for k = 0..k_max and ``predicted[k]`` is the
    prediction made at step k-1 for time t_k (``predicted[0]`` is x_0).
    ``errors[k] = ||x_k - x*(t_k)||`` and ``pred_errors[k]`` the same for the
    predicted point. After a divergence at step ``diverged_at`` the remaining
    entries are NaN.
    """

    grid: Any
    config: Any
    iterates: np.ndarray
    predicted: np.ndarray
    reference: Optional[np.ndarray] = None
    errors: Optional[np.ndarray] = None
    pred_errors: Optional[np.ndarray] = None
    diverged_at: Optional[int] = None
    flags: dict = field(default_factory=dict)

    @property
    def diverged(self):
        return self.diverged_at is not None

    def attach_reference(self, reference):
        self.reference = np.asarray(reference, dtype=float)
        self.errors = np.linalg.norm(self.iterates - self.reference, axis=1)
        self.pred_errors = np.linalg.norm(self.predicted - self.reference, axis=1)
        return self

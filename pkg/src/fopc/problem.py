"""Time-varying problems, feasible sets and derivative self-checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class SmoothnessConstants:
    """Declared smoothness constants of a time-varying objective.

    ``m`` and ``L`` bound the Hessian spectrum on the feasible set, ``C0``
    bounds the mixed derivative. ``C1``, ``C2`` and ``C3`` bound the third
    order derivatives (space-space-space, space-time-space and
    time-time-space); when any of them is missing only the global O(h)
    certificates can be evaluated.
    """

    m: float
    L: float
    C0: float = 0.0
    C1: Optional[float] = None
    C2: Optional[float] = None
    C3: Optional[float] = None

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if not self.L >= self.m:
            raise ValueError(f"L must be >= m, got L={self.L}, m={self.m}")
        for name in ("C0", "C1", "C2", "C3"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    @property
    def has_third_order(self) -> bool:
        return self.C1 is not None and self.C2 is not None and self.C3 is not None


class TimeVaryingProblem:
    """Base class for f(x; t) with first and second order information.

    Subclasses implement :meth:`value`, :meth:`gradient` and
    :meth:`hessian_vec`. :meth:`mixed_derivative` returns ``None`` when the
    time derivative of the gradient is not available in closed form.
    Evaluators must be pure functions of ``(x, t)``.
    """

    dim: int
    constants: SmoothnessConstants

    def value(self, x, t):
        raise NotImplementedError

    def gradient(self, x, t):
        raise NotImplementedError

    def hessian_vec(self, x, t, v):
        raise NotImplementedError

    def mixed_derivative(self, x, t):
        return None

    def hessian(self, x, t):
        """Dense Hessian assembled column by column from :meth:`hessian_vec`."""
        n = self.dim
        H = np.empty((n, n))
        e = np.zeros(n)
        for i in range(n):
            e[i] = 1.0
            H[:, i] = self.hessian_vec(x, t, e)
            e[i] = 0.0
        return H


@dataclass
class FunctionProblem(TimeVaryingProblem):
    """Problem assembled from plain callables."""

    dim: int
    value_fn: Callable
    gradient_fn: Callable
    hessian_vec_fn: Callable
    constants: SmoothnessConstants
    mixed_fn: Optional[Callable] = None
    hessian_fn: Optional[Callable] = None

    def value(self, x, t):
        return float(self.value_fn(x, t))

    def gradient(self, x, t):
        return np.asarray(self.gradient_fn(x, t), dtype=float)

    def hessian_vec(self, x, t, v):
        return np.asarray(self.hessian_vec_fn(x, t, v), dtype=float)

    def mixed_derivative(self, x, t):
        if self.mixed_fn is None:
            return None
        return np.asarray(self.mixed_fn(x, t), dtype=float)

    def hessian(self, x, t):
        if self.hessian_fn is not None:
            return np.asarray(self.hessian_fn(x, t), dtype=float)
        return super().hessian(x, t)


def quadratic_problem(H, b=None, drift=None, m=None, L=None, C0=0.0):
    """f(x; t) = 1/2 (x - c(t))'H(x - c(t)) with a constant, symmetric H.

    ``drift(t)`` returns the minimizer c(t) of the unconstrained problem and
    its time derivative as a pair; ``b`` is a fixed minimizer when ``drift``
    is None. C1 = C2 = 0 exactly; C3 is declared 0, which is only right for
    linear drifts, so pass a custom problem when curved drifts need it.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = H.shape[0]
    eig = np.linalg.eigvalsh(H)
    m = float(eig[0]) if m is None else m
    L = float(eig[-1]) if L is None else L
    if drift is None:
        c0 = np.zeros(n) if b is None else np.asarray(b, dtype=float)

        def drift(t):
            return c0, np.zeros(n)

    def value(x, t):
        d = x - drift(t)[0]
        return 0.5 * d @ H @ d

    def grad(x, t):
        return H @ (x - drift(t)[0])

    def hvp(x, t, v):
        return H @ v

    def mixed(x, t):
        return -H @ drift(t)[1]

    consts = SmoothnessConstants(m=m, L=L, C0=C0, C1=0.0, C2=0.0, C3=0.0)
    return FunctionProblem(
        dim=n,
        value_fn=value,
        gradient_fn=grad,
        hessian_vec_fn=hvp,
        constants=consts,
        mixed_fn=mixed,
        hessian_fn=lambda x, t: H,
    )


# -- feasible sets -----------------------------------------------------------


class FeasibleSet:
    dim: int

    def project(self, x):
        raise NotImplementedError

    def contains(self, x, tol=0.0):
        raise NotImplementedError

    def sample(self, rng, count):
        """Uniform-ish points in the set; only meaningful for bounded sets."""
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(
                f"dimension mismatch: set has dim {self.dim}, got shape {x.shape}"
            )
        return x


@dataclass(frozen=True)
class WholeSpace(FeasibleSet):
    dim: int

    def project(self, x):
        return self._check(x).copy()

    def contains(self, x, tol=0.0):
        return bool(np.all(np.isfinite(self._check(x))))


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: np.ndarray
    upper: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        up = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > up):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "dim", lo.size)

    @classmethod
    def uniform(cls, n, lower, upper):
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    def project(self, x):
        return np.clip(self._check(x), self.lower, self.upper)

    def contains(self, x, tol=0.0):
        x = self._check(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng, count):
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))


@dataclass(frozen=True, eq=False)
class Ball(FeasibleSet):
    center: np.ndarray
    radius: float
    dim: int = field(init=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dim", c.size)

    def project(self, x):
        x = self._check(x)
        d = x - self.center
        dist = np.linalg.norm(d)
        # a rescaled point can land a few ulps outside; keeping it makes
        # projection exactly idempotent
        if dist <= self.radius * (1.0 + 8 * np.finfo(float).eps):
            return x.copy()
        return self.center + d * (self.radius / dist)

    def contains(self, x, tol=0.0):
        x = self._check(x)
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def sample(self, rng, count):
        d = rng.standard_normal((count, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(count, 1)) ** (1.0 / self.dim)
        return self.center + r * d


def project(feasible_set, x):
    """Euclidean projection of ``x`` onto ``feasible_set``."""
    return feasible_set.project(x)


@dataclass(frozen=True)
class SamplingGrid:
    h: float
    k_max: int
    t0: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"sampling period must be positive, got {self.h}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")

    def time(self, k):
        return self.t0 + k * self.h

    @property
    def times(self):
        return self.t0 + np.arange(self.k_max + 1) * self.h

    @classmethod
    def covering(cls, h, horizon, t0=0.0):
        """Smallest grid with ``k_max * h >= horizon``."""
        return cls(h=h, k_max=max(1, math.ceil(horizon / h - 1e-9)), t0=t0)


# -- derivative checks -------------------------------------------------------


@dataclass
class VerificationReport:
    gradient_residuals: np.ndarray
    hessian_residuals: np.ndarray
    symmetry_residuals: np.ndarray
    mixed_residuals: Optional[np.ndarray]
    rayleigh_min: float
    rayleigh_max: float
    declared_m: float
    declared_L: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _directional_diff(fun, x, d, delta, inside):
    """Second-order accurate derivative of ``fun`` at ``x`` along ``d``.

    Central when both neighbours are feasible, otherwise one-sided three
    point stencils. Returns None when no stencil stays feasible.
    """
    xp, xm = x + delta * d, x - delta * d
    if inside(xp) and inside(xm):
        return (fun(xp) - fun(xm)) / (2 * delta)
    xpp = x + 2 * delta * d
    if inside(xp) and inside(xpp):
        return (-3 * fun(x) + 4 * fun(xp) - fun(xpp)) / (2 * delta)
    xmm = x - 2 * delta * d
    if inside(xm) and inside(xmm):
        return (3 * fun(x) - 4 * fun(xm) + fun(xmm)) / (2 * delta)
    return None


def verify_problem(
    problem,
    feasible_set,
    probes=100,
    seed=0,
    x_range=(-2.0, 2.0),
    t_range=(0.0, 10.0),
    grad_rtol=1e-5,
    hess_rtol=1e-4,
    bound_tol=1e-6,
):
    """Cross-check analytic derivatives and declared m, L at random probes.

    Probe points are drawn from ``feasible_set`` when it is bounded and from
    the cube ``x_range``^n otherwise. Nothing is raised: failures are listed
    in ``report.violations``.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    n = problem.dim
    if isinstance(feasible_set, WholeSpace):
        xs = rng.uniform(x_range[0], x_range[1], size=(probes, n))
    else:
        xs = feasible_set.sample(rng, probes)
    ts = rng.uniform(t_range[0], t_range[1], size=probes)
    inside = lambda z: feasible_set.contains(z)

    grad_res, hess_res, sym_res, mixed_res = [], [], [], []
    rq_min, rq_max = math.inf, -math.inf
    violations = []
    m, L = problem.constants.m, problem.constants.L

    for j in range(probes):
        x, t = xs[j], float(ts[j])
        delta = 1e-5 * max(1.0, float(np.max(np.abs(x))))

        g = problem.gradient(x, t)
        fd = np.empty(n)
        e = np.zeros(n)
        for i in range(n):
            e[i] = 1.0
            val = _directional_diff(lambda z: problem.value(z, t), x, e, delta, inside)
            fd[i] = g[i] if val is None else val
            e[i] = 0.0
        r = np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g))
        grad_res.append(r)
        if r > grad_rtol:
            violations.append(f"probe {j}: gradient residual {r:.3e}")

        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        dg = _directional_diff(lambda z: problem.gradient(z, t), x, v, delta, inside)
        if dg is None:
            v = np.zeros(n)
            v[rng.integers(n)] = 1.0
            dg = _directional_diff(lambda z: problem.gradient(z, t), x, v, delta, inside)
        Hv = problem.hessian_vec(x, t, v)
        r = np.linalg.norm(dg - Hv) / max(1.0, np.linalg.norm(Hv))
        hess_res.append(r)
        if r > hess_rtol:
            violations.append(f"probe {j}: hessian residual {r:.3e}")

        u = rng.standard_normal(n)
        a, b = u @ problem.hessian_vec(x, t, v), v @ problem.hessian_vec(x, t, u)
        r = abs(a - b) / max(1.0, abs(a), abs(b))
        sym_res.append(r)
        if r > 1e-10:
            violations.append(f"probe {j}: hessian asymmetry {r:.3e}")

        if n <= 200:
            H = problem.hessian(x, t)
            eig = np.linalg.eigvalsh(0.5 * (H + H.T))
            lo, hi = float(eig[0]), float(eig[-1])
        else:
            w = rng.standard_normal((8, n))
            q = [wi @ problem.hessian_vec(x, t, wi) / (wi @ wi) for wi in w]
            lo, hi = min(q), max(q)
        rq_min, rq_max = min(rq_min, lo), max(rq_max, hi)
        if lo < m - bound_tol:
            violations.append(f"probe {j}: Rayleigh quotient {lo:.6g} below m={m}")
        if hi > L + bound_tol:
            violations.append(f"probe {j}: Rayleigh quotient {hi:.6g} above L={L}")

        c = problem.mixed_derivative(x, t)
        if c is not None:
            dt = 1e-5 * max(1.0, abs(t))
            fd_t = (problem.gradient(x, t + dt) - problem.gradient(x, t - dt)) / (2 * dt)
            r = np.linalg.norm(fd_t - c) / max(1.0, np.linalg.norm(c))
            mixed_res.append(r)
            if r > hess_rtol:
                violations.append(f"probe {j}: mixed derivative residual {r:.3e}")

    return VerificationReport(
        gradient_residuals=np.array(grad_res),
        hessian_residuals=np.array(hess_res),
        symmetry_residuals=np.array(sym_res),
        mixed_residuals=np.array(mixed_res) if mixed_res else None,
        rayleigh_min=rq_min,
        rayleigh_max=rq_max,
        declared_m=m,
        declared_L=L,
        violations=violations,
    )

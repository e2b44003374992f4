"""Benchmark problem instances.

Three scenarios are provided:

* a scalar tracking problem with a softplus barrier and periodic target,
* a box-constrained vector problem with time-modulated exponential terms,
* a DER dispatch problem that tracks a substation power setpoint, driven by
  a synthetic load trace (generator and CSV round-trip included).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import brentq, minimize_scalar
from scipy.special import expit

from .problem import Box, SmoothnessConstants, TimeVaryingProblem, WholeSpace


# -- scalar ------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarScenario:
    omega: float = math.pi / 2
    kappa: float = 2.0
    mu: float = 1.75


def _max_logistic_third(kappa, mu):
    """max over x of |d^3/dx^3 kappa log(1 + e^{mu x})|.

    The third derivative is kappa mu^3 s(1-s)(1-2s) with s the logistic
    function; maximize over s in [0, 1] on a grid, then refine.
    """
    phi = lambda s: abs(s * (1 - s) * (1 - 2 * s))
    grid = np.linspace(0.0, 1.0, 20001)
    vals = np.abs(grid * (1 - grid) * (1 - 2 * grid))
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda s: -phi(s), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    return kappa * mu ** 3 * max(phi(res.x), vals[i])


class ScalarProblem(TimeVaryingProblem):
    """f(x; t) = 1/2 (x - cos(omega t))^2 + kappa log(1 + exp(mu x))."""

    def __init__(self, cfg: ScalarScenario):
        if cfg.kappa < 0 or cfg.mu < 0:
            raise ValueError("kappa and mu must be non-negative")
        if cfg.omega == 0:
            raise ValueError("omega must be non-zero")
        self.cfg = cfg
        self.dim = 1
        w, k, mu = cfg.omega, cfg.kappa, cfg.mu
        self.constants = SmoothnessConstants(
            m=1.0,
            L=1.0 + k * mu ** 2 / 4,
            C0=abs(w),
            C1=float(_max_logistic_third(k, mu)),
            C2=0.0,
            C3=w ** 2,
        )

    def value(self, x, t):
        c = self.cfg
        x0 = float(np.asarray(x).reshape(-1)[0])
        return 0.5 * (x0 - math.cos(c.omega * t)) ** 2 + c.kappa * np.logaddexp(0.0, c.mu * x0)

    def gradient(self, x, t):
        c = self.cfg
        x = np.asarray(x, dtype=float)
        return x - math.cos(c.omega * t) + c.kappa * c.mu * expit(c.mu * x)

    def _curv(self, x):
        c = self.cfg
        s = expit(c.mu * np.asarray(x, dtype=float))
        return 1.0 + c.kappa * c.mu ** 2 * s * (1 - s)

    def hessian_vec(self, x, t, v):
        return self._curv(x) * np.asarray(v, dtype=float)

    def hessian(self, x, t):
        return np.diag(self._curv(x))

    def mixed_derivative(self, x, t):
        c = self.cfg
        return np.full(1, c.omega * math.sin(c.omega * t))


def build_scalar(cfg: Optional[ScalarScenario] = None):
    """Scalar tracking problem on the real line; returns (problem, set, constants)."""
    prob = ScalarProblem(cfg or ScalarScenario())
    return prob, WholeSpace(1), prob.constants


# -- vector, box constrained --------------------------------------------------


@dataclass(frozen=True)
class VectorScenario:
    n: int = 50
    omega: float = 0.1 * math.pi
    mu: float = 0.25
    lower: float = 0.0
    upper: float = 0.4
    rng_seed: int = 0


class VectorProblem(TimeVaryingProblem):
    """f(x; t) = 1/2 ||x + 1||_Q^2 + sum_i kappa_i sin^2(omega t + phi_i) exp(mu (x_i - 2)^2).

    Declared constants hold on the box only; outside it the exponential
    terms are not uniformly smooth.
    """

    def __init__(self, cfg: VectorScenario):
        if cfg.n < 1:
            raise ValueError("n must be >= 1")
        if not cfg.lower <= cfg.upper:
            raise ValueError("need lower <= upper")
        self.cfg = cfg
        self.dim = n = cfg.n
        rng = np.random.default_rng(cfg.rng_seed)
        u = rng.standard_normal(n)
        self.kappa = rng.uniform(0.0, 1.0, n)
        # variance pi, i.e. standard deviation sqrt(pi)
        self.phi = rng.normal(0.0, math.sqrt(math.pi), n)
        self.Q = np.eye(n) + np.outer(u, u) / n
        self.constants = self._bound_constants()

    def _bound_constants(self):
        c = self.cfg
        mu, w = c.mu, c.omega
        # all exponential-term derivatives grow with |x_i - 2|
        d_lo, d_hi = c.lower - 2.0, c.upper - 2.0
        dmax = max(abs(d_lo), abs(d_hi))
        e = math.exp(mu * dmax ** 2)
        g1 = 2 * mu * dmax * e  # |d/dx e(x)|
        g2 = e * (2 * mu + 4 * mu ** 2 * dmax ** 2)  # d2/dx2, increasing in |d|
        g3 = e * (12 * mu ** 2 * dmax + 8 * mu ** 3 * dmax ** 3)
        kmax = float(np.max(self.kappa))
        knorm = float(np.linalg.norm(self.kappa))
        # Q = I + uu'/n >= I and the exponential terms are convex, so m = 1
        L = float(np.linalg.eigvalsh(self.Q)[-1]) + kmax * g2
        return SmoothnessConstants(
            m=1.0,
            L=L,
            C0=w * g1 * knorm,
            C1=kmax * g3,
            C2=w * kmax * g2,
            C3=2 * w ** 2 * g1 * knorm,
        )

    def _parts(self, x, t):
        c = self.cfg
        x = np.asarray(x, dtype=float)
        arg = c.omega * t + self.phi
        d = x - 2.0
        e = np.exp(c.mu * d ** 2)
        return x, arg, d, e

    def value(self, x, t):
        x, arg, d, e = self._parts(x, t)
        y = x + 1.0
        return 0.5 * y @ self.Q @ y + float(np.sum(self.kappa * np.sin(arg) ** 2 * e))

    def gradient(self, x, t):
        x, arg, d, e = self._parts(x, t)
        mu = self.cfg.mu
        return self.Q @ (x + 1.0) + self.kappa * np.sin(arg) ** 2 * 2 * mu * d * e

    def _diag(self, x, t):
        x, arg, d, e = self._parts(x, t)
        mu = self.cfg.mu
        return self.kappa * np.sin(arg) ** 2 * e * (2 * mu + 4 * mu ** 2 * d ** 2)

    def hessian_vec(self, x, t, v):
        v = np.asarray(v, dtype=float)
        return self.Q @ v + self._diag(x, t) * v

    def hessian(self, x, t):
        return self.Q + np.diag(self._diag(x, t))

    def mixed_derivative(self, x, t):
        x, arg, d, e = self._parts(x, t)
        c = self.cfg
        return self.kappa * c.omega * np.sin(2 * arg) * 2 * c.mu * d * e


def build_vector(cfg: Optional[VectorScenario] = None):
    """Box-constrained vector problem; returns (problem, box, constants)."""
    cfg = cfg or VectorScenario()
    prob = VectorProblem(cfg)
    box = Box.uniform(cfg.n, cfg.lower, cfg.upper)
    return prob, box, prob.constants


# -- load traces ----------------------------------------------------------------

TRACE_HEADER = ("t_seconds", "load_kW", "setpoint_kW")


@dataclass
class LoadTrace:
    """Uniformly sampled load a(t_k) and setpoint p0_set(t_k), in kW."""

    t: np.ndarray
    load: np.ndarray
    setpoint: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.load = np.asarray(self.load, dtype=float)
        self.setpoint = np.asarray(self.setpoint, dtype=float)
        if not (self.t.shape == self.load.shape == self.setpoint.shape) or self.t.ndim != 1:
            raise ValueError("trace series must be 1-D and share a length")
        if self.t.size < 1:
            raise ValueError("trace must be nonempty")

    @property
    def h(self):
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 1.0

    def __len__(self):
        return self.t.size


def generate_load_trace(seed, steps, h=1.0, base_kW=400.0, daily_amplitude_kW=60.0,
                        noise_kW=5.0, ar_coeff=0.9, period_s=86400.0, phase=None,
                        smoothing_window=301):
    """Synthetic aggregate load with a matching smooth setpoint.

    ``load = base + amplitude sin(2 pi t / period + phase) + AR(1)`` where
    the AR(1) process has innovation standard deviation ``noise_kW`` and is
    started from its stationary distribution. The setpoint is a centered
    moving average of the load over ``smoothing_window`` samples.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not h > 0:
        raise ValueError("h must be positive")
    if not -1 < ar_coeff < 1:
        raise ValueError("ar_coeff must lie in (-1, 1)")
    rng = np.random.default_rng(seed)
    if phase is None:
        phase = rng.uniform(0.0, 2 * math.pi)
    t = np.arange(steps) * h
    innov = rng.standard_normal(steps) * noise_kW
    noise = np.empty(steps)
    noise[0] = innov[0] / math.sqrt(1 - ar_coeff ** 2)
    for k in range(1, steps):
        noise[k] = ar_coeff * noise[k - 1] + innov[k]
    load = base_kW + daily_amplitude_kW * np.sin(2 * math.pi * t / period_s + phase) + noise
    size = max(1, min(int(smoothing_window), steps))
    setpoint = uniform_filter1d(load, size=size, mode="nearest")
    return LoadTrace(t=t, load=load, setpoint=setpoint)


def write_trace_csv(trace, path):
    """Write a trace with full round-trip precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in zip(trace.t, trace.load, trace.setpoint):
            w.writerow([f"{v:.17g}" for v in row])


class TraceFormatError(ValueError):
    pass


def load_trace_csv(path, rtol=1e-9):
    """Read a trace written by :func:`write_trace_csv`.

    Errors name the 1-based file line (the header is line 1).
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(s.strip() for s in header) != TRACE_HEADER:
            raise TraceFormatError(f"line 1: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise TraceFormatError(f"line {lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise TraceFormatError(f"line {lineno}: non-finite value")
            rows.append((lineno, vals))
    if not rows:
        raise TraceFormatError("trace has no data rows")
    data = np.array([v for _, v in rows])
    t = data[:, 0]
    if t.size > 1:
        h = t[1] - t[0]
        if not h > 0:
            raise TraceFormatError(f"line {rows[1][0]}: timestamps must increase")
        steps = np.diff(t)
        bad = np.flatnonzero(np.abs(steps - h) > rtol * max(1.0, abs(h), np.max(np.abs(t))))
        if bad.size:
            raise TraceFormatError(f"line {rows[bad[0] + 1][0]}: non-uniform sampling period")
    return LoadTrace(t=t, load=data[:, 1], setpoint=data[:, 2])


# -- DER dispatch ------------------------------------------------------------------


@dataclass
class DerScenario:
    """DER dispatch that tracks a substation setpoint.

    Decision vector x = (p_1, q_1, ..., p_N, q_N) in kW / kvar. The
    substation power is modelled as ``p0(x, t) = sens' x + load(t)``; the
    affine offset of the linearized power-flow model is folded into the
    load series. ``sensitivity`` defaults to a seeded draw scaled so the
    Hessian spectrum is exactly [1, target_L].
    """

    N: int = 10
    trace: Optional[LoadTrace] = None
    sensitivity: Optional[np.ndarray] = None
    tracking_weight: float = 2.0
    p_cost: float = 1.0
    q_cost: float = 0.5
    p_bounds: tuple = (-50.0, 50.0)
    q_bounds: tuple = (-50.0, 50.0)
    target_L: float = 21.0
    seed: int = 0


def _scaled_sensitivity(N, diag, weight, target_L, seed):
    rng = np.random.default_rng(seed)
    raw = np.empty(2 * N)
    # more load at the substation when DERs absorb; reactive effect smaller
    raw[0::2] = -rng.uniform(0.5, 1.5, N)
    raw[1::2] = rng.uniform(-0.4, 0.4, N)
    lam_max = lambda s: np.linalg.eigvalsh(np.diag(diag) + weight * s ** 2 * np.outer(raw, raw))[-1]
    if target_L <= diag.max():
        raise ValueError("target_L must exceed the largest cost curvature")
    hi = 1.0
    while lam_max(hi) < target_L:
        hi *= 2
    s = brentq(lambda s: lam_max(s) - target_L, 0.0, hi, xtol=1e-15, rtol=1e-15)
    return s * raw


class DerProblem(TimeVaryingProblem):
    """sum p_cost p^2 + q_cost q^2 + (w/2)(setpoint(t) - sens' x - load(t))^2."""

    def __init__(self, cfg: DerScenario):
        if cfg.trace is None:
            raise ValueError("DER scenario needs a load trace")
        if cfg.tracking_weight < 0:
            raise ValueError("tracking_weight must be non-negative")
        self.cfg = cfg
        self.trace = cfg.trace
        N = cfg.N
        self.dim = 2 * N
        diag = np.empty(2 * N)
        diag[0::2] = 2 * cfg.p_cost
        diag[1::2] = 2 * cfg.q_cost
        self.diag = diag
        if cfg.sensitivity is None:
            sens = _scaled_sensitivity(N, diag, cfg.tracking_weight, cfg.target_L, cfg.seed)
        else:
            sens = np.asarray(cfg.sensitivity, dtype=float).reshape(-1)
            if sens.size != 2 * N:
                raise ValueError(f"sensitivity must have length {2 * N}")
        self.sens = sens
        self.H = np.diag(diag) + cfg.tracking_weight * np.outer(sens, sens)
        lam = np.linalg.eigvalsh(self.H)
        mismatch = self._r = self.trace.setpoint - self.trace.load
        h = self.trace.h
        wn = cfg.tracking_weight * np.linalg.norm(sens)
        d1 = np.abs(np.diff(mismatch)) / h
        d2 = np.abs(np.diff(mismatch, 2)) / h ** 2
        self.constants = SmoothnessConstants(
            m=float(lam[0]),
            L=float(lam[-1]),
            C0=float(wn * d1.max()) if d1.size else 0.0,
            C1=0.0,
            C2=0.0,
            C3=float(wn * d2.max()) if d2.size else 0.0,
        )

    def _mismatch(self, t):
        tr = self.trace
        pos = (t - tr.t[0]) / tr.h
        j = int(round(pos))
        if 0 <= j < tr.t.size and abs(pos - j) < 1e-12:
            return float(self._r[j])
        return float(np.interp(t, tr.t, self._r))

    def _mismatch_rate(self, t):
        # left (causal) slope of the interpolant; zero before the second sample
        tr = self.trace
        h = tr.h
        if tr.t.size < 2 or t <= tr.t[0] or t > tr.t[-1]:
            return 0.0
        j = int(math.ceil((t - tr.t[0]) / h - 1e-9))
        j = min(max(j, 1), tr.t.size - 1)
        return float((self._r[j] - self._r[j - 1]) / h)

    def residual(self, x, t):
        return self._mismatch(t) - self.sens @ np.asarray(x, dtype=float)

    def value(self, x, t):
        x = np.asarray(x, dtype=float)
        w = self.cfg.tracking_weight
        return 0.5 * float(x @ (self.diag * x)) + 0.5 * w * self.residual(x, t) ** 2

    def gradient(self, x, t):
        x = np.asarray(x, dtype=float)
        res = self._mismatch(t) - self.sens @ x
        return self.diag * x - (self.cfg.tracking_weight * res) * self.sens

    def hessian_vec(self, x, t, v):
        return self.H @ np.asarray(v, dtype=float)

    def hessian(self, x, t):
        return self.H

    def mixed_derivative(self, x, t):
        return -self.cfg.tracking_weight * self._mismatch_rate(t) * self.sens


def build_der(cfg: DerScenario):
    """DER dispatch problem; returns (problem, box, constants)."""
    prob = DerProblem(cfg)
    N = cfg.N
    lo, up = np.empty(2 * N), np.empty(2 * N)
    lo[0::2], up[0::2] = cfg.p_bounds
    lo[1::2], up[1::2] = cfg.q_bounds
    return prob, Box(lo, up), prob.constants

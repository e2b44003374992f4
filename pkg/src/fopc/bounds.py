"""Convergence certificates for prediction-correction tracking.

Everything here is a closed-form evaluation from declared smoothness
constants. ``gamma=None`` selects the constrained (projected) analysis;
a number in [0, 1] selects the unconstrained analysis with that dial.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

INF = math.inf


class Regime(str, Enum):
    GLOBAL = "GlobalOh"
    LOCAL = "LocalOh2"
    NONE = "NoCertificate"


def contraction_rates(m, L, alpha, beta):
    """Per-step contraction factors of the prediction and correction gradient maps."""
    if not m > 0 or not L >= m:
        raise ValueError("need m > 0 and L >= m")
    if not alpha > 0 or not beta > 0:
        raise ValueError("stepsizes must be positive")
    rho_P = max(abs(1 - alpha * m), abs(1 - alpha * L))
    rho_C = max(abs(1 - beta * m), abs(1 - beta * L))
    return rho_P, rho_C


def _pow(rho, n):
    # rho**inf with rho < 1 is 0; keep 1**inf = 1 for the boundary case.
    if n == INF:
        return 0.0 if rho < 1 else (1.0 if rho == 1 else INF)
    return rho ** n


def tau0_constrained(rho_P, rho_C, P, C, m, L):
    rP, rC = _pow(rho_P, P), _pow(rho_C, C)
    return rC * (rP + (rP + 1) * 2 * L / m)


def tau0_unconstrained(rho_P, rho_C, P, C, gamma, m, L):
    rP, rC = _pow(rho_P, P), _pow(rho_C, C)
    return rC * (rP + (rP + 1) * (1 - gamma + gamma * 2 * L / m))


def _curvature(m, C0, C1, C2):
    return C1 * C0 / m ** 2 + C2 / m


def local_region(m, L, C0, C1, C2, rho_P, rho_C, P, C, tau, gamma=None, h=0.0):
    """Maximum sampling period and attraction radius of the local regime.

    Returns ``(h_bar, R_bar)``, or ``None`` when the precondition on ``tau``
    fails. ``tau = 1`` is accepted and gives the supremum of h_bar over
    admissible rates. Infinite values are returned as ``math.inf``: a zero
    curvature term gives ``h_bar = inf`` and ``C1 = 0`` (or ``gamma = 0``)
    gives ``R_bar = inf``.
    """
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if C1 is None or C2 is None:
        raise ValueError("local region needs C1 and C2")
    rP, rC = _pow(rho_P, P), _pow(rho_C, C)
    K = _curvature(m, C0, C1, C2)
    if rC == 0:
        base = INF
    else:
        base = (tau - rC * rP) / (rC * (rP + 1))
    if gamma is None:
        if not rP * rC < tau:
            return None
        shifted = base
        r_scale = C1
    else:
        if not (1 - gamma) * rC * (1 + rP) + rP * rC < tau:
            return None
        shifted = base - 1 + gamma
        r_scale = gamma * C1
    h_bar = INF if K == 0 else shifted / K
    if r_scale == 0 or h_bar == INF:
        R_bar = INF
    else:
        R_bar = (2 * m / r_scale) * K * (h_bar - h)
    return h_bar, R_bar


def taylor_error_bounds(m, L, C0, h, C1=None, C2=None, C3=None):
    """Bounds (delta1, delta2) on the error of the optimal prediction.

    ``delta2`` is None unless all of C1, C2, C3 are given.
    """
    if h < 0:
        raise ValueError("h must be non-negative")
    delta1 = 2 * h * C0 * (1 + L / m) / m
    if C1 is None or C2 is None or C3 is None:
        return delta1, None
    delta2 = 0.5 * h ** 2 * (C0 ** 2 * C1 / m ** 3 + 2 * C0 * C2 / m ** 2 + C3 / m)
    return delta1, delta2


def recursion_coefficients(regime, gamma, rho_P, rho_C, P, C, m, L, C0, h, C1=None, C2=None, C3=None, tau=None):
    """Coefficients (eta0, eta1, eta2) of the one-step error recursion.

    ``e_{k+1} <= rho_C^C (eta0 e_k^2 + eta1 e_k + eta2)``. Also returns the
    limsup bound ``rho_C^C eta2 / (1 - rate)`` with rate tau0 in the global
    case and ``tau`` in the local one (``inf`` when rate >= 1).
    """
    rP, rC = _pow(rho_P, P), _pow(rho_C, C)
    d1, d2 = taylor_error_bounds(m, L, C0, h, C1, C2, C3)
    regime = Regime(regime)
    if regime == Regime.GLOBAL:
        if gamma is None:
            eta = (0.0, rP + (rP + 1) * 2 * L / m, (2 * rP + 1) * d1)
        else:
            eta = (0.0, rP + (rP + 1) * (1 - gamma + gamma * 2 * L / m), 2 * (2 * rP + 1) * d1)
        rate = rC * eta[1]
    elif regime == Regime.LOCAL:
        if d2 is None:
            raise ValueError("local recursion needs C1, C2 and C3")
        K = _curvature(m, C0, C1, C2)
        g = 1.0 if gamma is None else gamma
        shift = 0.0 if gamma is None else 1 - gamma
        eta = (
            g * (rP + 1) * C1 / (2 * m),
            rP + (rP + 1) * (shift + h * K),
            rP * (h * C0 / m + d2) + d2,
        )
        if tau is None:
            raise ValueError("local recursion needs tau")
        rate = tau
    else:
        raise ValueError("no recursion for NoCertificate")
    eta2_bar = rC * eta[2]
    asym = INF if rate >= 1 else eta2_bar / (1 - rate)
    return eta, asym


@dataclass
class BoundReport:
    rho_P: float
    rho_C: float
    tau0: float
    regime: Regime
    P: float = 0
    C: int = 0
    h: float = 0.0
    gamma: Optional[float] = None
    tau: Optional[float] = None
    h_bar: Optional[float] = None
    R_bar: Optional[float] = None
    delta1: Optional[float] = None
    delta2: Optional[float] = None
    eta: tuple = (0.0, 0.0, 0.0)
    asymptotic_bound: float = INF
    notes: list = field(default_factory=list)

    @property
    def certified(self):
        return self.regime != Regime.NONE

    @property
    def rate(self):
        if self.regime == Regime.GLOBAL:
            return self.tau0
        if self.regime == Regime.LOCAL:
            return self.tau
        return None

    @property
    def eta2_bar(self):
        return _pow(self.rho_C, self.C) * self.eta[2]

    def to_dict(self):
        d = asdict(self)
        d["regime"] = self.regime.value
        d["eta"] = list(self.eta)
        return _encode(d)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _encode(obj):
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def certify(constants, alpha, beta, P, C, h, gamma=None, tau=None, initial_gap=None):
    """Best available certificate for a configuration.

    The local O(h^2) regime is used when ``tau`` is given, all third order
    constants are declared, its precondition holds, ``h <= h_bar`` and
    ``initial_gap`` is known and at most ``R_bar``. Otherwise the global
    O(h) regime is used when ``tau0 < 1``. Without ``tau``, ``h_bar`` and
    ``R_bar`` are reported at the supremum ``tau -> 1`` for information.
    """
    c = constants
    m, L = c.m, c.L
    rho_P, rho_C = contraction_rates(m, L, alpha, beta)
    if gamma is None:
        tau0 = tau0_constrained(rho_P, rho_C, P, C, m, L)
    else:
        tau0 = tau0_unconstrained(rho_P, rho_C, P, C, gamma, m, L)
    d1, d2 = taylor_error_bounds(m, L, c.C0, h, c.C1, c.C2, c.C3)
    report = BoundReport(
        rho_P=rho_P, rho_C=rho_C, tau0=tau0, regime=Regime.NONE,
        P=P, C=C, h=h, gamma=gamma, tau=tau, delta1=d1, delta2=d2,
    )
    if tau is not None and not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")

    if c.C1 is not None and c.C2 is not None:
        region = local_region(m, L, c.C0, c.C1, c.C2, rho_P, rho_C, P, C,
                              1.0 if tau is None else tau, gamma, h)
        if region is not None:
            report.h_bar, report.R_bar = region
        else:
            report.notes.append("local precondition on tau fails")

    local_ok = (
        tau is not None
        and c.has_third_order
        and report.h_bar is not None
        and h <= report.h_bar
        and initial_gap is not None
        and initial_gap <= report.R_bar
    )
    if local_ok:
        eta, asym = recursion_coefficients(
            Regime.LOCAL, gamma, rho_P, rho_C, P, C, m, L, c.C0, h, c.C1, c.C2, c.C3, tau=tau)
        report.regime, report.eta, report.asymptotic_bound = Regime.LOCAL, eta, asym
    elif tau0 < 1:
        eta, asym = recursion_coefficients(Regime.GLOBAL, gamma, rho_P, rho_C, P, C, m, L, c.C0, h)
        report.regime, report.eta, report.asymptotic_bound = Regime.GLOBAL, eta, asym
    else:
        eta, _ = recursion_coefficients(Regime.GLOBAL, gamma, rho_P, rho_C, P, C, m, L, c.C0, h)
        report.eta = eta
        report.notes.append("tau0 >= 1 and no local certificate")
    return report


def error_envelope(report, initial_gap, k):
    """rate^k * gap + eta2_bar (1 - rate^k) / (1 - rate)."""
    if not report.certified:
        raise ValueError("no certificate: envelope undefined")
    rate = report.rate
    rk = rate ** k
    return rk * initial_gap + report.eta2_bar * (1 - rk) / (1 - rate)

"""Sharp minimax risk constants and class risk formulas."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "SmoothnessClass",
    "RiskReport",
    "coefficient_of_difficulty",
    "pinsker_uni",
    "j_integrals",
    "pinsker_aniso",
    "harmonic_order",
    "class_risk",
    "solve_eta",
    "risk_report",
]

_ARITY = {
    "sobolev": 2,
    "analytic_sobolev": 2,
    "analytic": 2,
    "uni_sobolev": 1,
    "uni_analytic": 1,
    "bounded_spectrum": 1,
}


@dataclass(frozen=True)
class SmoothnessClass:
    """A smoothness class by kind, its parameters and the radius ``Q``.

    Parameters by kind: ``sobolev`` (m_Y, m_X), ``analytic_sobolev``
    (gamma, m_X), ``analytic`` (gamma_1, gamma_2), ``uni_sobolev`` (alpha,),
    ``uni_analytic`` (gamma,), ``bounded_spectrum`` (q,).
    """

    kind: str
    params: tuple
    Q: float = 1.0

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unsupported class kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_ARITY[self.kind]} parameter(s)")
        if any(not (p > 0 and math.isfinite(p)) for p in params):
            raise ValueError("smoothness parameters must be positive")
        if not (self.Q > 0 and math.isfinite(self.Q)):
            raise ValueError("Q must be positive")
        orders = {"sobolev": params, "analytic_sobolev": params[1:], "uni_sobolev": params}
        if self.kind in orders and any(p != int(p) for p in orders[self.kind]):
            raise ValueError("Sobolev orders must be integers")
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class RiskReport:
    coefficient_of_difficulty: float
    pinsker: float
    risk_closed_form: float
    risk_series: Optional[float] = None
    eta_n: Optional[float] = None
    residual: Optional[float] = None


def coefficient_of_difficulty(model, loss):
    """``int int f / p`` over the unit square (square loss) or ``int 1/p`` (line loss)."""
    return model.difficulty(loss)


def pinsker_uni(m):
    if m < 1:
        raise ValueError("m must be >= 1")
    e = 2.0 * m + 1.0
    return e ** (1.0 / e) * (m / (math.pi * (m + 1.0))) ** (2.0 * m / e)


def harmonic_order(alpha, beta):
    """``tau`` with ``1/(2 tau) = 1/(2 alpha) + 1/(2 beta)``."""
    return 1.0 / (1.0 / alpha + 1.0 / beta)


def _graded_nodes(panels, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    # cosine grading clusters panels at both ends, where u^(2a) and the
    # boundary curve have their singular derivatives
    e = 0.5 - 0.5 * np.cos(np.pi * np.linspace(0.0, 1.0, panels + 1))
    a, b = e[:-1], e[1:]
    nodes = ((b - a)[:, None] * (x + 1) / 2 + a[:, None]).ravel()
    weights = ((b - a)[:, None] * w / 2).ravel()
    return nodes, weights


def j_integrals(alpha, beta, panels=128):
    """``J1 = int (sqrt(s) - s)``, ``J2 = int (1 - sqrt(s))`` over ``s = u^(2a) + v^(2b) <= 1``.

    The region is mapped to the unit square with ``v = (1 - u^(2a))^(1/(2b)) t``.
    """
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    u, wu = _graded_nodes(panels)
    top = (1.0 - u ** (2 * alpha)) ** (1.0 / (2 * beta))
    v = top[:, None] * u[None, :]
    s = np.clip(u[:, None] ** (2 * alpha) + v ** (2 * beta), 0.0, 1.0)
    w = (wu * top)[:, None] * wu[None, :]
    root = np.sqrt(s)
    J1 = float(np.sum(w * (root - s)))
    J2 = float(np.sum(w * (1.0 - root)))
    if not (np.isfinite(J1) and np.isfinite(J2) and J1 > 0 and J2 > 0):
        raise ArithmeticError("J-integral quadrature failed")
    return J1, J2


def pinsker_aniso(alpha, beta):
    tau = harmonic_order(alpha, beta)
    J1, J2 = j_integrals(alpha, beta)
    return math.pi ** (-4 * tau / (2 * tau + 1)) * J1 ** (-1 / (2 * tau + 1)) * J2


def class_risk(cls, difficulty, n, C=1.0):
    """Sharp (or, for ``bounded_spectrum``, up-to-``C``) minimax risk of a class."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not difficulty > 0:
        raise ValueError("difficulty must be positive")
    d, Q, p = float(difficulty), cls.Q, cls.params
    ln = math.log(n)
    if cls.kind == "sobolev":
        tau = harmonic_order(*p)
        return pinsker_aniso(*p) * Q ** (1 / (2 * tau + 1)) * (d / n) ** (2 * tau / (2 * tau + 1))
    if cls.kind == "analytic_sobolev":
        gamma, m = p
        e = 2 * m / (2 * m + 1)
        return pinsker_uni(m) * Q ** (1 / (2 * m + 1)) * (d / n) ** e * (2 * m * ln / ((2 * m + 1) * math.pi * gamma)) ** e
    if cls.kind == "analytic":
        return d * ln ** 2 / (math.pi * p[0] * p[1] * n)
    if cls.kind == "uni_sobolev":
        m = p[0]
        return pinsker_uni(m) * Q ** (1 / (2 * m + 1)) * (d / n) ** (2 * m / (2 * m + 1))
    if cls.kind == "uni_analytic":
        return d * ln / (math.pi * p[0] * n)
    return C * p[0] * d / n  # bounded_spectrum


def _weights_1d(kind, param, limit):
    """Increasing weight sequence ``a(0), a(1), ...`` while below ``limit``."""
    if kind == "power":
        top = int(limit ** (1.0 / (2 * param)) / math.pi) + 2
        idx = np.arange(top + 1, dtype=float)
        a = (math.pi * idx) ** (2 * param)
    else:  # exponential with rate ``param``; a(0) = 1 is masked by I(j + r > 0)
        top = int(math.log(max(limit, 1.0)) / param) + 2
        a = np.exp(param * np.arange(top + 1, dtype=float))
    return a[a < limit] if np.any(a < limit) else a[:1]


def _lattice(cls, eta):
    """All weights ``a_jr < 1/eta`` (plus the origin term) for the class."""
    limit = 1.0 / eta
    p = cls.params
    if cls.kind == "uni_sobolev":
        return _weights_1d("power", p[0], limit)
    if cls.kind == "sobolev":
        A, B = _weights_1d("power", p[0], limit), _weights_1d("power", p[1], limit)
        return (A[:, None] + B[None, :]).ravel()
    if cls.kind == "analytic_sobolev":
        A, B = _weights_1d("exp", math.pi * p[0], limit), _weights_1d("power", p[1], limit)
    elif cls.kind == "analytic":
        A, B = _weights_1d("exp", math.pi * p[0], limit), _weights_1d("exp", p[1], limit)
    else:
        raise ValueError(f"series risk is not defined for {cls.kind!r}")
    a = A[:, None] + B[None, :]
    a[0, 0] = 0.0
    return a.ravel()


def solve_eta(cls, difficulty, n, rtol=1e-12):
    """Solve ``sum (sqrt(a/eta) - a)_+ = Q n / d`` and return ``(eta, R*)``.

    ``R* = (d/n) sum (1 - sqrt(a eta))_+``. Only weights below ``1/eta``
    contribute, so the lattice is enumerated exactly up to that bound.
    """
    if n < 2 or not difficulty > 0:
        raise ValueError("need n >= 2 and positive difficulty")
    d = float(difficulty)
    target = cls.Q * n / d

    def excess(log_eta):
        eta = math.exp(log_eta)
        a = _lattice(cls, eta)
        return float(np.sum(np.clip(np.sqrt(a / eta) - a, 0.0, None))) - target

    # start from a moderate eta and expand geometrically; starting at the
    # tiny end would enumerate an astronomically large lattice
    lo, hi = math.log(1e-3), math.log(1e-3)
    step = math.log(10.0)
    while excess(hi) > 0:
        hi += step
        if hi > 700:
            raise ArithmeticError("could not bracket eta from above")
    while excess(lo) < 0:
        lo -= step
        if lo < -700:
            raise ArithmeticError("could not bracket eta from below")
    log_eta = brentq(excess, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    eta = math.exp(log_eta)
    residual = abs(excess(log_eta)) / target
    if residual > 1e-6:
        raise ArithmeticError(f"eta residual {residual:.3g} exceeds tolerance")
    a = _lattice(cls, eta)
    risk = d / n * float(np.sum(np.clip(1.0 - np.sqrt(a * eta), 0.0, None)))
    return eta, risk


def risk_report(cls, difficulty, n, C=1.0):
    """Closed-form risk, its constant and, where defined, the series risk."""
    p = cls.params
    if cls.kind == "sobolev":
        pinsker = pinsker_aniso(*p)
    elif cls.kind == "analytic_sobolev":
        pinsker = pinsker_uni(p[1])
    elif cls.kind == "uni_sobolev":
        pinsker = pinsker_uni(p[0])
    elif cls.kind == "analytic":
        pinsker = 1.0 / (math.pi * p[0] * p[1])
    elif cls.kind == "uni_analytic":
        pinsker = 1.0 / (math.pi * p[0])
    else:
        pinsker = C
    closed = class_risk(cls, difficulty, n, C=C)
    eta = series = residual = None
    if cls.kind in ("sobolev", "analytic_sobolev", "analytic", "uni_sobolev"):
        eta, series = solve_eta(cls, difficulty, n)
        a = _lattice(cls, eta)
        target = cls.Q * n / difficulty
        residual = abs(float(np.sum(np.clip(np.sqrt(a / eta) - a, 0.0, None))) - target) / target
    return RiskReport(float(difficulty), float(pinsker), float(closed), series, eta, residual)

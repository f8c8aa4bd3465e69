"""Wiener blockwise oracle, oracle-risk terms and univariate benchmark estimators."""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .blocks import adjusted_length, bi_threshold
from .estimator import (
    DU,
    CondDensityFit,
    _assemble,
    _empirical_stage,
    _prepare,
    _u_grid,
    _block_simpson,
    shrink_weight,
)
from .fourier_core import cosine_matrix, segment_simpson_weights

__all__ = [
    "TrueModel",
    "TrueFunctionals",
    "OracleWeights",
    "MiseTerms",
    "true_functionals",
    "oracle_weights",
    "oracle_fit",
    "oracle_mise_expression",
    "super_oracle_bandwidth",
    "silverman_bandwidth",
    "kernel_density",
    "kernel_super_oracle",
    "kernel_sub_oracle",
    "UnivariateFit",
    "univariate_ep_density",
]

C_STAR = {"square": 1.0, "line": 1.0 / np.pi}


def _composite_gl(a, b, panels, order=16):
    """Composite Gauss-Legendre nodes/weights on ``[a, b]``; ``a``, ``b`` may be arrays."""
    x, w = np.polynomial.legendre.leggauss(order)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    t = np.linspace(0.0, 1.0, panels + 1)
    lo = a + (b - a) * t[:-1]
    h = (b - a) / panels
    nodes = (lo[..., None] + h[..., None] * (x + 1) / 2).reshape(*lo.shape[:-1], -1)
    weights = np.broadcast_to(h[..., None] * w / 2, lo.shape + (order,)).reshape(*lo.shape[:-1], -1)
    return nodes, weights


@dataclass
class TrueModel:
    """A known conditional density with its design.

    ``cd(y, x)`` must broadcast. ``y_support(x)`` returns ``(lo, hi)`` bounds
    of the support of ``f(.|x)`` (infinite bounds allowed); supplying it makes
    the response integrals exact up to smooth quadrature. ``char(u, x)`` is the
    conditional characteristic function; it is computed by quadrature when
    absent. ``window`` bounds y-integrals on the real line.
    """

    cd: Callable
    design: object
    char: Optional[Callable] = None
    support: str = "unit_square"
    y_support: Optional[Callable] = None
    window: float = 8.0
    x_panels: int = 32
    y_panels: int = 32

    def __post_init__(self):
        if self.support not in ("unit_square", "line_strip"):
            raise ValueError("support must be 'unit_square' or 'line_strip'")

    # quadrature helpers -------------------------------------------------
    def x_quadrature(self):
        return _composite_gl(0.0, 1.0, self.x_panels)

    def _y_bounds(self, x, clip):
        x = np.asarray(x, dtype=float)
        if self.y_support is None:
            lo = np.full(x.shape, -np.inf)
            hi = np.full(x.shape, np.inf)
        else:
            lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in self.y_support(x))
        return np.maximum(lo, clip[0]), np.minimum(hi, clip[1])

    def _y_nodes(self, x, clip):
        lo, hi = self._y_bounds(x, clip)
        hi = np.maximum(hi, lo)
        return _composite_gl(lo, hi, self.y_panels)

    def check_normalization(self, spot_x=(0.1, 0.5, 0.9), tol=1e-6):
        """Raise if ``f(.|x)`` does not integrate to one over the response line."""
        x = np.asarray(spot_x, dtype=float)
        ys, ws = self._y_nodes(x, (-self.window * 8, self.window * 8))
        mass = np.sum(ws * self.cd(ys, x[:, None]), axis=1)
        if np.any(np.abs(mass - 1.0) > tol):
            raise ValueError(f"conditional density masses {mass} differ from 1")
        return mass

    # functionals ---------------------------------------------------------
    def y_moments(self, j_values, x):
        """``M[j, x] = integral over [0,1] of f(y|x) phi_j(y) dy``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        j_values = np.asarray(j_values)
        ys, ws = self._y_nodes(x, (0.0, 1.0))
        fw = ws * self.cd(ys, x[:, None])
        out = np.empty((j_values.size, x.size))
        for i, j in enumerate(j_values):
            basis = np.ones_like(ys) if j == 0 else np.sqrt(2.0) * np.cos(np.pi * j * ys)
            out[i] = np.sum(fw * basis, axis=1)
        return out

    def cf(self, u, x):
        """Conditional characteristic function ``h(u|x)``; broadcasts."""
        if self.char is not None:
            return self.char(u, x)
        u, x = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(x, dtype=float))
        flat_u, flat_x = u.reshape(-1), x.reshape(-1)
        ys, ws = self._y_nodes(flat_x, (-self.window, self.window))
        fw = ws * self.cd(ys, flat_x[:, None])
        out = np.sum(fw * np.exp(1j * flat_u[:, None] * ys), axis=1)
        return out.reshape(u.shape)

    def difficulty(self, loss):
        """Coefficient of difficulty: ``int int f/p`` on the square, or ``int 1/p``."""
        xg, wg = self.x_quadrature()
        inv_p = 1.0 / np.asarray(self.design.density(xg), dtype=float)
        if loss == "line":
            return float(wg @ inv_p)
        if loss == "square":
            mass = self.y_moments([0], xg)[0]
            return float(wg @ (mass * inv_p))
        raise ValueError("loss must be 'square' or 'line'")

    def energy(self, loss):
        """``(int int f^2, int fbar^2)`` over the loss domain, ``fbar = int f dx``."""
        xg, wg = self.x_quadrature()
        clip = (0.0, 1.0) if loss == "square" else (-self.window, self.window)
        ys, ws = self._y_nodes(xg, clip)
        total = float(wg @ np.sum(ws * self.cd(ys, xg[:, None]) ** 2, axis=1))
        lo, hi = self._y_bounds(xg, clip)
        yg, wy = _composite_gl(np.min(lo), np.max(np.maximum(hi, lo)), self.y_panels * 8)
        fbar = self.cd(yg[:, None], xg[None, :]) @ wg
        return total, float(wy @ fbar ** 2)

    def outside_mass(self):
        """Largest per-x mass of ``f(.|x)`` outside the y-window."""
        xg = np.linspace(0.0, 1.0, 9)
        ys, ws = self._y_nodes(xg, (-self.window, self.window))
        inside = np.sum(ws * self.cd(ys, xg[:, None]), axis=1)
        return float(np.max(np.abs(1.0 - inside)))


@dataclass(frozen=True)
class TrueFunctionals:
    """True block functionals plus the underlying coefficients or slices."""

    uni: np.ndarray
    bi: np.ndarray
    uni_coef: np.ndarray = None
    bi_coef: np.ndarray = None
    u_uni: np.ndarray = None
    h_uni: np.ndarray = None
    u_bi: np.ndarray = None
    h_bi: np.ndarray = None


@dataclass(frozen=True)
class OracleWeights:
    uni: np.ndarray
    bi: np.ndarray
    functionals: TrueFunctionals
    difficulty: float


def true_functionals(model, schedule, loss, du=DU):
    """Sobolev functionals ``Theta_k`` and ``Theta_k,tau`` of a known model."""
    s = schedule
    ue, be = s.uni_edges, s.bi_edges
    R = s.bi_top
    xg, wg = model.x_quadrature()
    bi_len = np.array([[s.bi_length(k, t) for t in range(1, s.T + 1)] for k in range(1, s.T + 1)], float)
    if loss == "square":
        J = max(s.j_max_uni, R)
        M = model.y_moments(np.arange(J), xg)  # (J, X)
        uni_coef = M[: s.j_max_uni] @ wg
        bi_coef = M[:R] @ (cosine_matrix(xg, R, start=1) * wg[:, None])
        uni = np.array([np.sum(uni_coef[ue[k]:ue[k + 1]] ** 2) / (ue[k + 1] - ue[k]) for k in range(s.K)])
        bi = np.empty((s.T, s.T))
        for k in range(s.T):
            for t in range(s.T):
                bi[k, t] = np.sum(bi_coef[be[k]:be[k + 1], be[t]:be[t + 1]] ** 2) / bi_len[k, t]
        return TrueFunctionals(uni, bi, uni_coef=uni_coef, bi_coef=bi_coef)
    if loss != "line":
        raise ValueError("loss must be 'square' or 'line'")
    u_uni = _u_grid(s.j_max_uni, du)
    u_bi = _u_grid(R, du)
    H_uni = model.cf(u_uni[:, None], xg[None, :])
    h_uni = H_uni @ wg
    H_bi = model.cf(u_bi[:, None], xg[None, :])
    h_bi = (H_bi @ (cosine_matrix(xg, R, start=1) * wg[:, None])).T  # (R, Nu)
    w_uni = _block_simpson(u_uni, ue)
    w_bi = _block_simpson(u_bi, be)
    uni = (w_uni @ np.abs(h_uni) ** 2) / s.uni_lengths
    per_r = w_bi @ (np.abs(h_bi) ** 2).T
    bi = np.empty((s.T, s.T))
    for t in range(s.T):
        bi[:, t] = per_r[:, be[t]:be[t + 1]].sum(axis=1) / bi_len[:, t]
    return TrueFunctionals(uni, bi, u_uni=u_uni, h_uni=h_uni, u_bi=u_bi, h_bi=h_bi)


def oracle_weights(model, schedule, loss, n, functionals=None):
    """Wiener weights ``Theta / (Theta + d/n)`` from the true model (no threshold)."""
    tf = functionals if functionals is not None else true_functionals(model, schedule, loss)
    d = model.difficulty(loss)
    noise = d / n

    def wiener(theta):
        denom = theta + noise
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, theta / np.where(denom > 0, denom, 1.0), 0.0)

    return OracleWeights(wiener(tf.uni), wiener(tf.bi), tf, d)


def oracle_fit(data, model, schedule=None, loss="square", phat=None, weights=None, du=DU):
    """Blockwise Wiener oracle: EP coefficients with true-model weights."""
    schedule, phat = _prepare(data, loss, schedule, phat)
    stage = _empirical_stage(data, loss, schedule, phat, du)
    ow = weights if weights is not None else oracle_weights(model, schedule, loss, data.n)
    return _assemble(stage, ow.uni, ow.bi, meta={"oracle": True})


class MiseTerms(NamedTuple):
    main: float
    tail: float
    delta_star_bound: float
    delta_bound: float


def oracle_mise_expression(model, schedule, loss, n, nu=None, C=1.0, functionals=None):
    """Oracle MISE main and tail terms with the two remainder bounds.

    ``nu`` is an optional pair ``(nu_uni, nu_bi)`` of arrays in (0, 1); the
    default balances the two bracket terms. ``C`` stands in for the generic
    constant of the bounds, which are diagnostic only.
    """
    s = schedule
    tf = functionals if functionals is not None else true_functionals(model, s, loss)
    ow = oracle_weights(model, s, loss, n, tf)
    d = ow.difficulty
    c_star = C_STAR[loss]
    L_uni = s.uni_lengths.astype(float)
    L_bi = np.array([[s.bi_length(k, t) for t in range(1, s.T + 1)] for k in range(1, s.T + 1)], float)
    main = c_star * d / n * (np.sum(L_uni * ow.uni) + np.sum(L_bi * ow.bi))

    in_uni = float(np.sum(L_uni * tf.uni))
    in_bi = float(np.sum(L_bi * tf.bi))
    if loss == "line" and model.outside_mass() > 1e-6:
        warnings.warn("truth mass outside the y-window exceeds 1e-6; tail is approximate", stacklevel=2)
    total, marginal = model.energy(loss)
    scale = 1.0 if loss == "square" else np.pi  # Parseval: int_0^inf |h|^2 du = pi int f^2 dy
    tail_uni = scale * marginal - in_uni
    tail_bi = scale * (total - marginal) - in_bi
    tail = c_star * (tail_uni + tail_bi)
    if tail < -1e-8 * max(main, 1e-300):
        warnings.warn("tail mass is negative beyond quadrature tolerance", stacklevel=2)
    tail = max(tail, 0.0)

    L_star = np.array([[_adjusted_or_inf(s, k, t, model) for t in range(1, s.T + 1)] for k in range(1, s.T + 1)])
    if nu is None:
        nu_uni = np.clip(np.sqrt(ow.uni * (1.0 / L_uni + n ** -0.25)), 1e-12, 1 - 1e-12)
        nu_bi = np.clip(np.sqrt(ow.bi / L_star), 1e-12, 1 - 1e-12)
    else:
        nu_uni, nu_bi = (np.asarray(v, dtype=float) for v in nu)
        if np.any((nu_uni <= 0) | (nu_uni >= 1)) or np.any((nu_bi <= 0) | (nu_bi >= 1)):
            raise ValueError("nu arrays must lie in (0, 1)")
    ds_uni = L_uni * ow.uni * (nu_uni + C / nu_uni * ow.uni * (1.0 / L_uni + n ** -0.25))
    ds_bi = L_bi * ow.bi * (nu_bi + C / nu_bi * ow.bi / L_star)
    delta_star = c_star * d / n * (np.sum(ds_uni) + np.sum(ds_bi))

    t_uni = s.uni_thresholds
    t_bi = np.array([[bi_threshold(k, t) for t in range(1, s.T + 1)] for k in range(1, s.T + 1)])
    du_ = L_uni * ow.uni * (t_uni ** 0.5 + L_uni ** -0.5 * t_uni ** -1.5) + L_uni ** -2.0 * t_uni ** -5.0
    db_ = L_bi * ow.bi * (t_bi ** 0.5 + L_star ** -0.5 * t_bi ** -1.5) + L_star ** -2.0 * t_bi ** -5.0
    delta = C / n * (np.sum(du_) + np.sum(db_))
    return MiseTerms(float(main), float(tail), float(delta_star), float(delta))


def _adjusted_or_inf(schedule, k, tau, model):
    # a block whose functional vanishes has infinite adjusted length: its
    # remainder terms are zero
    try:
        return adjusted_length(schedule, k, tau, model)
    except ValueError:
        return math.inf


# --- univariate kernel benchmarks ----------------------------------------

def super_oracle_bandwidth(n):
    """AMISE-optimal Gaussian-kernel bandwidth for a standard normal density."""
    return (4.0 / 3.0) ** 0.2 * n ** -0.2


def silverman_bandwidth(y):
    y = np.asarray(y, dtype=float)
    sd = np.std(y, ddof=1)
    q75, q25 = np.percentile(y, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if not spread > 0:
        raise ValueError("sample has zero spread; bandwidth undefined")
    return 0.9 * spread * y.size ** -0.2


def kernel_density(y_samples, y_grid, bandwidth):
    y = np.asarray(y_samples, dtype=float)
    g = np.asarray(y_grid, dtype=float)
    z = (g[:, None] - y[None, :]) / bandwidth
    return np.exp(-0.5 * z ** 2).sum(axis=1) / (y.size * bandwidth * np.sqrt(2 * np.pi))


def kernel_super_oracle(y_samples, y_grid):
    y = np.asarray(y_samples, dtype=float)
    if y.size < 2:
        raise ValueError("need at least 2 samples")
    return kernel_density(y, y_grid, super_oracle_bandwidth(y.size))


def kernel_sub_oracle(y_samples, y_grid):
    y = np.asarray(y_samples, dtype=float)
    if y.size < 3:
        raise ValueError("need at least 3 samples")
    return kernel_density(y, y_grid, silverman_bandwidth(y))


# --- univariate EP density -----------------------------------------------

@dataclass(frozen=True)
class UnivariateFit:
    loss: str
    schedule: object
    weights: np.ndarray
    difficulty: float
    coef: np.ndarray = None  # square: shrunk cosine coefficients
    u: np.ndarray = None  # line: u-grid
    slice_quad: np.ndarray = None  # line: shrunk slice times Simpson weights

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        if self.loss == "square":
            if np.any(flat < 0) or np.any(flat > 1):
                raise ValueError("y must lie in [0, 1] under square loss")
            out = cosine_matrix(flat, self.coef.size) @ self.coef
        else:
            phase = np.outer(flat, self.u)
            c = self.slice_quad
            out = (np.cos(phase) @ c.real + np.sin(phase) @ c.imag) / np.pi
        return out.reshape(y.shape)


def univariate_ep_density(y_samples, schedule, loss="square", du=DU):
    """Blockwise-shrinkage density estimate of ``Y`` alone, on the univariate blocks."""
    y = np.asarray(y_samples, dtype=float).reshape(-1)
    n = y.size
    if n < 16:
        raise ValueError("need n >= 16")
    s = schedule
    ue = s.uni_edges
    if loss == "square":
        inside = (y >= 0) & (y <= 1)
        d = float(inside.sum() / n)
        coef = (cosine_matrix(np.where(inside, y, 0.0), s.j_max_uni) * inside[:, None]).sum(axis=0) / n
        energy = np.array([np.sum(coef[ue[k]:ue[k + 1]] ** 2) / (ue[k + 1] - ue[k]) for k in range(s.K)]) - d / n
        w = np.atleast_1d(shrink_weight(energy, s.uni_thresholds, d, n))
        return UnivariateFit("square", s, w, d, coef=coef * np.repeat(w, np.diff(ue)))
    if loss != "line":
        raise ValueError("loss must be 'square' or 'line'")
    d = 1.0
    u = _u_grid(s.j_max_uni, du)
    phase = np.outer(u, y)
    h = (np.cos(phase).sum(axis=1) + 1j * np.sin(phase).sum(axis=1)) / n
    wb = _block_simpson(u, ue)
    energy = (wb @ np.abs(h) ** 2) / s.uni_lengths - d / n
    w = np.atleast_1d(shrink_weight(energy, s.uni_thresholds, d, n))
    return UnivariateFit("line", s, w, d, u=u, slice_quad=(w @ wb) * h)

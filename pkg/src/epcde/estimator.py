"""Blockwise-shrinkage (EP) conditional density estimator for both losses.

The fitted estimate is ``f(y|x) = f(y) + psi(y, x)``: a univariate part built
from the ``r = 0`` coefficients (or the ``r = 0`` characteristic slice) and a
bivariate part from the ``r >= 1`` coefficients, each shrunk block by block.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .blocks import build_schedule
from .design import MIN_N, estimate_design
from .fourier_core import (
    char_weights_matrix,
    cosine_matrix,
    segment_simpson_weights,
)

__all__ = [
    "SamplePairs",
    "CondDensityFit",
    "EPConditionalDensity",
    "estimate_difficulty",
    "block_energy",
    "shrink_weight",
    "fit",
    "evaluate",
    "evaluate_grid",
    "project_nonneg",
    "DU",
]

DU = 0.05
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class SamplePairs:
    """Observed ``(Y_l, X_l)`` pairs; ``kind`` records the design if known."""

    y: np.ndarray
    x: np.ndarray
    kind: str = "unknown"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if y.shape != x.shape:
            raise ValueError("y and x must have the same length")
        if y.size == 0:
            raise ValueError("empty data")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValueError("data must be finite")
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("predictors must lie in [0, 1]")
        if self.kind not in ("fixed", "random", "unknown"):
            raise ValueError("kind must be 'fixed', 'random' or 'unknown'")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.y.size


def _unit_quadrature(panels=256):
    edges = np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[:-1], edges[1:]
    nodes = ((b - a)[:, None] * (_GL_X + 1) / 2 + a[:, None]).ravel()
    weights = ((b - a)[:, None] * _GL_W / 2).ravel()
    return nodes, weights


def estimate_difficulty(data, phat, loss):
    """Plug-in coefficient of difficulty.

    Square loss: ``n^-1 sum I(Y in [0,1]) / phat(X)^2``. Line loss: the
    integral of ``1 / phat`` over [0, 1].
    """
    if loss == "square":
        inside = (data.y >= 0) & (data.y <= 1)
        return float(np.sum(inside / np.asarray(phat(data.x), dtype=float) ** 2) / data.n)
    if loss == "line":
        nodes, weights = _unit_quadrature()
        return float(weights @ (1.0 / np.asarray(phat(nodes), dtype=float)))
    raise ValueError("loss must be 'square' or 'line'")


def block_energy(values, length, difficulty, n, quad_weights=None):
    """Block mean square of empirical coefficients minus ``difficulty / n``.

    For characteristic slices pass the Simpson ``quad_weights`` of the block so
    the sum becomes an integral of ``|h|^2`` over the block.
    """
    sq = np.abs(np.asarray(values)) ** 2
    total = sq.sum() if quad_weights is None else float(np.sum(np.asarray(quad_weights) * sq))
    return float(total / length - difficulty / n)


def shrink_weight(energy, threshold, difficulty, n):
    """Plugged-in Wiener weight with hard threshold; vectorised over blocks."""
    energy = np.asarray(energy, dtype=float)
    noise = difficulty / n
    keep = energy > np.asarray(threshold) * noise
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(keep, energy / (energy + noise), 0.0)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class _Stage:
    """Empirical coefficients and block energies shared by EP and oracle fits."""

    loss: str
    schedule: object
    n: int
    difficulty: float
    uni_energy: np.ndarray
    bi_energy: np.ndarray
    # square loss: uni_coef[j], bi_coef[j, r - 1]
    uni_coef: np.ndarray = None
    bi_coef: np.ndarray = None
    # line loss: slices on equispaced u-grids plus per-block Simpson weights
    u_uni: np.ndarray = None
    h_uni: np.ndarray = None
    u_bi: np.ndarray = None
    h_bi: np.ndarray = None
    w_uni_blocks: np.ndarray = None
    w_bi_blocks: np.ndarray = None


def _block_simpson(u, edges):
    """Row ``k`` holds Simpson weights of block ``[edges[k], edges[k+1]]`` on ``u``."""
    rows = [segment_simpson_weights(u, (edges[k], edges[k + 1])) for k in range(len(edges) - 1)]
    return np.vstack(rows)


def _u_grid(top, du):
    steps = int(round(top / du))
    if abs(steps * du - top) > 1e-9:
        raise ValueError("block edges must be multiples of the u-step")
    return np.arange(steps + 1) * du


def _empirical_stage(data, loss, schedule, phat, du=DU):
    n = data.n
    s = schedule
    p_at_x = np.asarray(phat(data.x), dtype=float)
    difficulty = estimate_difficulty(data, phat, loss)
    bi = s.bi_edges
    R = int(bi[-1])
    r_values = np.arange(1, R + 1)
    bi_len = np.array([[s.bi_length(k, t) for t in range(1, s.T + 1)] for k in range(1, s.T + 1)], float)

    if loss == "square":
        inside = (data.y >= 0) & (data.y <= 1)
        w = inside / p_at_x
        yc = np.where(inside, data.y, 0.0)
        J = max(s.j_max_uni, R)
        Phi_y = cosine_matrix(yc, J)
        weighted = Phi_y * w[:, None]
        uni_coef = weighted[:, : s.j_max_uni].sum(axis=0) / n
        Phi_x = cosine_matrix(data.x, R, start=1)
        bi_coef = weighted[:, :R].T @ Phi_x / n
        ue = s.uni_edges
        uni_energy = np.array(
            [block_energy(uni_coef[ue[k]:ue[k + 1]], ue[k + 1] - ue[k], difficulty, n) for k in range(s.K)]
        )
        sq = bi_coef ** 2
        bi_energy = np.empty((s.T, s.T))
        for k in range(s.T):
            for t in range(s.T):
                blk = sq[bi[k]:bi[k + 1], bi[t]:bi[t + 1]]
                bi_energy[k, t] = blk.sum() / bi_len[k, t] - difficulty / n
        return _Stage(loss, s, n, difficulty, uni_energy, bi_energy, uni_coef=uni_coef, bi_coef=bi_coef)

    u_uni = _u_grid(s.j_max_uni, du)
    u_bi = _u_grid(R, du)
    h_uni = char_weights_matrix(data.y, data.x, p_at_x, [0], u_uni)[0]
    h_bi = char_weights_matrix(data.y, data.x, p_at_x, r_values, u_bi)
    w_uni_blocks = _block_simpson(u_uni, s.uni_edges)
    w_bi_blocks = _block_simpson(u_bi, bi)
    uni_energy = (w_uni_blocks @ np.abs(h_uni) ** 2) / s.uni_lengths - difficulty / n
    # integral of |h_r|^2 over each u-block, for each r: (T, R)
    per_r = w_bi_blocks @ (np.abs(h_bi) ** 2).T
    bi_energy = np.empty((s.T, s.T))
    for t in range(s.T):
        cols = slice(bi[t], bi[t + 1])  # r = bi[t]+1 .. bi[t+1] -> column r-1
        bi_energy[:, t] = per_r[:, cols].sum(axis=1) / bi_len[:, t] - difficulty / n
    return _Stage(
        loss, s, n, difficulty, uni_energy, bi_energy,
        u_uni=u_uni, h_uni=h_uni, u_bi=u_bi, h_bi=h_bi,
        w_uni_blocks=w_uni_blocks, w_bi_blocks=w_bi_blocks,
    )


@dataclass(frozen=True)
class CondDensityFit:
    """A fitted (or oracle) estimate; immutable.

    Square loss: ``uni_part[j]`` and ``bi_part[j, r - 1]`` are shrunk cosine
    coefficients. Line loss: ``uni_part`` and ``bi_part[r - 1]`` are shrunk
    characteristic slices already multiplied by their Simpson weights on the
    grids ``u_uni`` and ``u_bi``, so inversion is a plain weighted sum.
    """

    loss: str
    schedule: object
    uni_part: np.ndarray
    bi_part: np.ndarray
    uni_weights: np.ndarray
    bi_weights: np.ndarray
    difficulty: float
    n: int
    u_uni: np.ndarray = None
    u_bi: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_coefficients(cls, schedule, uni, bi=None):
        """Unit-weight square-loss fit from coefficient arrays.

        Entries beyond the cutoffs are discarded; ``bi[j, r - 1]`` is indexed
        like :attr:`bi_part`.
        """
        J, R = schedule.j_max_uni, schedule.bi_top
        uni_part = np.zeros(J)
        uni = np.asarray(uni, dtype=float)
        uni_part[: min(J, uni.size)] = uni[:J]
        bi_part = np.zeros((R, R))
        if bi is not None:
            bi = np.asarray(bi, dtype=float)
            bi_part[: min(R, bi.shape[0]), : min(R, bi.shape[1])] = bi[:R, :R]
        return cls("square", schedule, uni_part, bi_part, np.ones(schedule.K),
                   np.ones((schedule.T, schedule.T)), 1.0, schedule.n)

    @classmethod
    def from_slices(cls, schedule, h0, h_r=None, du=DU):
        """Unit-weight line-loss fit from callables ``h0(u)`` and ``h_r(r, u)``."""
        u_uni = _u_grid(schedule.j_max_uni, du)
        u_bi = _u_grid(schedule.bi_top, du)
        w_uni = _block_simpson(u_uni, schedule.uni_edges).sum(axis=0)
        w_bi = _block_simpson(u_bi, schedule.bi_edges).sum(axis=0)
        uni_part = w_uni * np.asarray(h0(u_uni), dtype=complex)
        R = schedule.bi_top
        bi_part = np.zeros((R, u_bi.size), dtype=complex)
        if h_r is not None:
            for r in range(1, R + 1):
                bi_part[r - 1] = w_bi * np.asarray(h_r(r, u_bi), dtype=complex)
        return cls("line", schedule, uni_part, bi_part, np.ones(schedule.K),
                   np.ones((schedule.T, schedule.T)), 1.0, schedule.n, u_uni=u_uni, u_bi=u_bi)


def _assemble(stage, uni_w, bi_w, meta=None):
    s = stage.schedule
    ue, be = s.uni_edges, s.bi_edges
    if stage.loss == "square":
        uni_scale = np.repeat(uni_w, np.diff(ue))
        row_scale = np.repeat(np.arange(s.T), np.diff(be))
        bi_scale = bi_w[row_scale][:, row_scale]
        return CondDensityFit(
            "square", s, stage.uni_coef * uni_scale, stage.bi_coef * bi_scale,
            np.asarray(uni_w, float), np.asarray(bi_w, float), stage.difficulty, stage.n,
            meta=dict(meta or {}),
        )
    # node weights: sum over blocks of mu_block * simpson_block(node)
    uni_nodes = uni_w @ stage.w_uni_blocks
    tau_of_r = np.repeat(np.arange(s.T), np.diff(be))  # column r-1 -> tau index
    bi_nodes = bi_w[:, tau_of_r].T @ stage.w_bi_blocks  # (R, Nu)
    return CondDensityFit(
        "line", s, uni_nodes * stage.h_uni, bi_nodes * stage.h_bi,
        np.asarray(uni_w, float), np.asarray(bi_w, float), stage.difficulty, stage.n,
        u_uni=stage.u_uni, u_bi=stage.u_bi, meta=dict(meta or {}),
    )


def _ep_weights(stage):
    s = stage.schedule
    uni_w = shrink_weight(stage.uni_energy, s.uni_thresholds, stage.difficulty, stage.n)
    k = np.arange(1, s.T + 1)
    t_bi = 1.0 / np.log(np.log(np.outer(k + 3, k + 3)))
    bi_w = shrink_weight(stage.bi_energy, t_bi, stage.difficulty, stage.n)
    return np.atleast_1d(uni_w), np.atleast_2d(bi_w)


def _prepare(data, loss, schedule, phat):
    if loss not in ("square", "line"):
        raise ValueError("loss must be 'square' or 'line'")
    if data.n < MIN_N:
        raise ValueError(f"the estimator needs n >= {MIN_N} pairs")
    if schedule is None:
        schedule = build_schedule(data.n, loss)
    elif schedule.n != data.n or schedule.loss != loss:
        raise ValueError("schedule was built for a different n or loss")
    if phat is None:
        phat = estimate_design(data.x)
    return schedule, phat


def fit(data, loss="square", schedule=None, phat=None, du=DU):
    """Fit the EP estimator to ``data`` (a :class:`SamplePairs`)."""
    schedule, phat = _prepare(data, loss, schedule, phat)
    stage = _empirical_stage(data, loss, schedule, phat, du)
    uni_w, bi_w = _ep_weights(stage)
    return _assemble(stage, uni_w, bi_w, meta={"uni_energy": stage.uni_energy, "bi_energy": stage.bi_energy})


def _line_component(u, coef, y):
    phase = np.outer(np.atleast_1d(y), u)
    c = np.atleast_2d(coef)
    return (np.cos(phase) @ c.real.T + np.sin(phase) @ c.imag.T) / np.pi  # (Ny, rows)


def evaluate_grid(fit, y_grid, x_grid):
    """Fit evaluated on the tensor grid; result ``[i, j] = f(y_i | x_j)``."""
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("x must lie in [0, 1]")
    R = fit.bi_part.shape[0]
    Phi_x = cosine_matrix(x, R, start=1)
    if fit.loss == "square":
        if np.any(y < 0) or np.any(y > 1):
            raise ValueError("y must lie in [0, 1] under square loss")
        J = max(fit.uni_part.size, R)
        Phi_y = cosine_matrix(y, J)
        uni = Phi_y[:, : fit.uni_part.size] @ fit.uni_part
        bi = Phi_y[:, :R] @ fit.bi_part @ Phi_x.T
        return uni[:, None] + bi
    uni = _line_component(fit.u_uni, fit.uni_part, y)[:, 0]
    g = _line_component(fit.u_bi, fit.bi_part, y) if R else np.zeros((y.size, 0))
    return uni[:, None] + g @ Phi_x.T


def evaluate(fit, y, x):
    """Pointwise ``f(y|x)``; ``y`` and ``x`` broadcast against each other."""
    y_b, x_b = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    flat_y, flat_x = y_b.reshape(-1), x_b.reshape(-1)
    if np.any(flat_x < 0) or np.any(flat_x > 1):
        raise ValueError("x must lie in [0, 1]")
    R = fit.bi_part.shape[0]
    Phi_x = cosine_matrix(flat_x, R, start=1)
    if fit.loss == "square":
        if np.any(flat_y < 0) or np.any(flat_y > 1):
            raise ValueError("y must lie in [0, 1] under square loss")
        J = max(fit.uni_part.size, R)
        Phi_y = cosine_matrix(flat_y, J)
        out = Phi_y[:, : fit.uni_part.size] @ fit.uni_part
        out = out + np.einsum("ij,jk,ik->i", Phi_y[:, :R], fit.bi_part, Phi_x)
    else:
        out = _line_component(fit.u_uni, fit.uni_part, flat_y)[:, 0]
        if R:
            out = out + np.sum(_line_component(fit.u_bi, fit.bi_part, flat_y) * Phi_x, axis=1)
    out = out.reshape(y_b.shape)
    return float(out) if out.ndim == 0 else out


def project_nonneg(grid, loss, y_weights=None):
    """Clip a grid estimate at zero; under line loss rescale each x-slice to unit mass.

    ``grid[i, j]`` is the value at ``(y_i, x_j)`` and ``y_weights`` are the
    quadrature weights along y used for slice masses. Returns ``(grid,
    zero_slices)`` where ``zero_slices`` flags columns that were entirely
    nonpositive and are left at zero.
    """
    g = np.clip(np.asarray(grid, dtype=float), 0.0, None)
    mass_w = np.ones(g.shape[0]) if y_weights is None else np.asarray(y_weights, dtype=float)
    mass = mass_w @ g
    zero = ~(mass > 0)
    if loss == "line":
        scale = np.where(zero, 1.0, 1.0 / np.where(zero, 1.0, mass))
        g = g * scale[None, :]
    return g, zero


class EPConditionalDensity(BaseEstimator):
    """Adaptive blockwise-shrinkage conditional density estimator.

    Parameters
    ----------
    loss : {'square', 'line'}
        ``'square'`` estimates on the unit square; ``'line'`` estimates on the
        whole real line in y through characteristic-function slices.
    design_density : callable, optional
        Known design density. When omitted it is estimated from the predictors.
    uni_blocks : tuple, optional
        Custom univariate ``(edges, thresholds)``.
    du : float
        Step of the u-grid used for characteristic-function integrals.

    Attributes
    ----------
    fit_ : CondDensityFit
    schedule_ : BlockSchedule
    difficulty_ : float
    """

    def __init__(self, loss="square", design_density=None, uni_blocks=None, du=DU):
        self.loss = loss
        self.design_density = design_density
        self.uni_blocks = uni_blocks
        self.du = du

    def fit(self, X, y):
        x = _as_predictor(X)
        data = SamplePairs(np.asarray(y, dtype=float), x)
        schedule = build_schedule(data.n, self.loss, self.uni_blocks)
        self.fit_ = fit(data, self.loss, schedule, self.design_density, self.du)
        self.schedule_ = schedule
        self.difficulty_ = self.fit_.difficulty
        self.n_features_in_ = 1
        return self

    def predict_density(self, X, y):
        """Estimated ``f(y_l | x_l)`` for paired arrays."""
        check_is_fitted(self, "fit_")
        return evaluate(self.fit_, np.asarray(y, dtype=float), _as_predictor(X))

    def density_grid(self, y_grid, x_grid, project=False, y_weights=None):
        """Estimate on a tensor grid, optionally projected to a nonnegative density.

        Slice masses for the projection use ``y_weights``, by default
        ``np.gradient(y_grid)``.
        """
        check_is_fitted(self, "fit_")
        g = evaluate_grid(self.fit_, y_grid, x_grid)
        if project:
            if y_weights is None:
                y_weights = np.gradient(np.asarray(y_grid, dtype=float))
            g, _ = project_nonneg(g, self.loss, y_weights)
        return g


def _as_predictor(X):
    x = np.asarray(X, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError("a single predictor column is expected")
        x = x[:, 0]
    return x.reshape(-1)

"""A-priori blocks, thresholds and cutoffs for the blockwise-shrinkage estimator."""

import math
from dataclasses import dataclass
import numpy as np

from .design import MIN_N, lnln

__all__ = [
    "BlockSchedule",
    "build_schedule",
    "block_members",
    "adjusted_length",
    "default_uni_blocks",
    "bivariate_edges",
    "bi_threshold",
    "assumption3_sum",
]

LOSSES = ("square", "line")
ASSUMPTION3_BOUND = 25.0


def default_uni_blocks(count):
    """First ``count`` default univariate blocks: ``(edges, thresholds)``.

    Lengths 1, 2, then ``ceil(L_k (1 + 1/ln(k+2)))``; thresholds ``1/ln(k+2)``.
    ``edges`` has ``count + 1`` entries starting at 0.
    """
    lengths = [1, 2]
    while len(lengths) < count:
        k = len(lengths)
        lengths.append(math.ceil(lengths[-1] * (1.0 + 1.0 / math.log(k + 2))))
    lengths = lengths[:count]
    edges = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    thresholds = 1.0 / np.log(np.arange(1, count + 1) + 2.0)
    return edges, thresholds


def bivariate_edges(n, count):
    """First ``count + 1`` bivariate edges ``b'_1 = 0, b'_2, ...``."""
    b2 = 1 + int(math.floor(math.log(n) ** 0.75))
    growth = 1.0 + 1.0 / lnln(n)
    edges = [0, b2]
    s = 2
    while len(edges) < count + 1:
        edges.append(edges[-1] + int(math.floor(b2 * growth ** (s - 2))))
        s += 1
    return np.asarray(edges[: count + 1], dtype=np.int64)


def bi_threshold(k, tau):
    return 1.0 / math.log(math.log((k + 3) * (tau + 3)))


def assumption3_sum(edges, thresholds):
    lengths = np.diff(np.asarray(edges, dtype=float))
    t = np.asarray(thresholds, dtype=float)
    return float(np.sum(lengths ** -2.0 * t ** -5.0))


def _minimal_cutoff(edges_fn, bound):
    count = 1
    while True:
        edges = edges_fn(count)
        hits = np.nonzero(edges[1:] > bound)[0]
        if hits.size:
            return int(hits[0]) + 1
        count *= 2


@dataclass(frozen=True)
class BlockSchedule:
    """Blocks, thresholds and cutoffs for sample size ``n`` and a loss.

    ``uni_edges`` holds ``b_1 .. b_{K+1}`` and ``bi_edges`` holds
    ``b'_1 .. b'_{T+1}``. Univariate blocks are index sets (square loss) or
    u-intervals (line loss) with the same numeric edges.
    """

    uni_edges: np.ndarray
    bi_edges: np.ndarray
    uni_thresholds: np.ndarray
    K: int
    T: int
    n: int
    loss: str
    custom: bool = False

    @property
    def uni_lengths(self):
        return np.diff(self.uni_edges)

    @property
    def bi_lengths(self):
        return np.diff(self.bi_edges)

    def bi_threshold(self, k, tau):
        return bi_threshold(k, tau)

    def bi_length(self, k, tau):
        b = self.bi_edges
        return int((b[k] - b[k - 1]) * (b[tau] - b[tau - 1]))

    @property
    def j_max_uni(self):
        """Exclusive upper bound of univariate indices (or u-range end)."""
        return int(self.uni_edges[-1])

    @property
    def bi_top(self):
        return int(self.bi_edges[-1])

    def uni_edges_extended(self, count):
        if self.custom:
            if count + 1 > self.uni_edges.size:
                raise ValueError("custom schedule cannot be extended past its cutoff")
            return self.uni_edges[: count + 1]
        return default_uni_blocks(count)[0]

    def uni_thresholds_extended(self, count):
        if self.custom:
            return self.uni_thresholds[:count]
        return default_uni_blocks(count)[1]

    def bi_edges_extended(self, count):
        return bivariate_edges(self.n, count)


def build_schedule(n, loss="square", uni_spec=None, assumption3_bound=ASSUMPTION3_BOUND):
    """Construct the block schedule for sample size ``n``.

    ``uni_spec`` optionally overrides the univariate blocks with
    ``(edges, thresholds)``; it must reach past the univariate cutoff, have
    nonincreasing positive thresholds and keep ``sum L^-2 t^-5`` over the
    retained blocks below ``assumption3_bound``.
    """
    n = int(n)
    if n < MIN_N:
        raise ValueError(f"n must be at least {MIN_N}")
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}")
    lnl = lnln(n)
    uni_bound = n ** (1.0 / 3.0) * lnl
    bi_bound = n ** 0.25 * lnl

    if uni_spec is None:
        K = _minimal_cutoff(lambda c: default_uni_blocks(c)[0], uni_bound)
        edges, thresholds = default_uni_blocks(K)
        custom = False
    else:
        edges = np.asarray(uni_spec[0])
        thresholds = np.asarray(uni_spec[1], dtype=float)
        if edges.ndim != 1 or edges.size < 2 or edges[0] != 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("custom edges must start at 0 and increase strictly")
        if np.any(edges != np.round(edges)):
            raise ValueError("custom edges must be integers")
        edges = edges.astype(np.int64)
        if thresholds.size < edges.size - 1:
            raise ValueError("need one threshold per block")
        hits = np.nonzero(edges[1:] > uni_bound)[0]
        if not hits.size:
            raise ValueError("custom blocks do not reach the univariate cutoff")
        K = int(hits[0]) + 1
        edges = edges[: K + 1]
        thresholds = thresholds[:K]
        if np.any(thresholds <= 0) or np.any(np.diff(thresholds) > 0):
            raise ValueError("custom thresholds must be positive and nonincreasing")
        total = assumption3_sum(edges, thresholds)
        if total > assumption3_bound:
            raise ValueError(
                f"sum L_k^-2 t_k^-5 = {total:.4g} exceeds the declared bound {assumption3_bound}"
            )
        custom = True

    T = _minimal_cutoff(lambda c: bivariate_edges(n, c), bi_bound)
    return BlockSchedule(
        uni_edges=edges,
        bi_edges=bivariate_edges(n, T),
        uni_thresholds=np.asarray(thresholds, dtype=float),
        K=K,
        T=T,
        n=n,
        loss=loss,
        custom=custom,
    )


def block_members(schedule, k, tau=None):
    """Members of a block.

    With ``tau=None`` the univariate block ``B_k`` is returned: an index array
    (square loss) or the half-open interval ``(lo, hi)`` (line loss). For a
    bivariate block, square loss gives an ``(L, 2)`` array of ``(j, r)`` pairs
    and line loss gives ``((u_lo, u_hi), r_values)``.
    """
    if tau is None:
        if not 1 <= k <= schedule.K:
            raise IndexError("univariate block index out of range")
        lo, hi = int(schedule.uni_edges[k - 1]), int(schedule.uni_edges[k])
        if schedule.loss == "square":
            return np.arange(lo, hi)
        return (float(lo), float(hi))
    if not (1 <= k <= schedule.T and 1 <= tau <= schedule.T):
        raise IndexError("bivariate block index out of range")
    b = schedule.bi_edges
    r_values = np.arange(b[tau - 1] + 1, b[tau] + 1)
    if schedule.loss == "square":
        j_values = np.arange(b[k - 1], b[k])
        jj, rr = np.meshgrid(j_values, r_values, indexing="ij")
        return np.column_stack([jj.ravel(), rr.ravel()])
    return ((float(b[k - 1]), float(b[k])), r_values)


def adjusted_length(schedule, k, tau, model, du=0.05, x_nodes=256):
    """Adjusted length ``L*`` of a bivariate block for a known model.

    ``model`` must provide ``design.density`` and either ``y_moments(j_values,
    x)`` (square loss) or ``cf(u, x)``/``char(u, x)`` (line loss); see
    :class:`epcde.oracle.TrueModel`. Univariate blocks (``tau=None``) have
    ``L* = L``.
    """
    if tau is None:
        return float(schedule.uni_lengths[k - 1])
    b = schedule.bi_edges
    if not (1 <= k <= schedule.T and 1 <= tau <= schedule.T):
        raise IndexError("bivariate block index out of range")
    L = schedule.bi_length(k, tau)
    xg, wg = _unit_gauss(x_nodes)
    inv_p = 1.0 / np.asarray(model.design.density(xg), dtype=float)
    r_values = np.arange(b[tau - 1] + 1, b[tau] + 1)
    design_term = np.abs(_cos_terms(xg, 2 * r_values).T @ (wg * inv_p))
    if schedule.loss == "square":
        j_values = np.arange(b[k - 1], b[k])
        inner = model.y_moments(j_values, xg)  # (J, X)
        resp_term = (inner ** 2) @ wg
        denom = design_term.sum() * j_values.size + resp_term.sum() * r_values.size
    else:
        from .fourier_core import simpson_weights

        lo, hi = float(b[k - 1]), float(b[k])
        m = int(round((hi - lo) / du))
        m += m % 2
        u = np.linspace(lo, hi, m + 1)
        wu = simpson_weights(m + 1, (hi - lo) / m)
        char = getattr(model, "cf", None) or model.char
        hmod = np.abs(char(u[:, None], xg[None, :])) ** 2 @ wg
        denom = design_term.sum() * (hi - lo) + r_values.size * float(wu @ hmod)
    # quadrature leaves ~1e-17 residue where the functional vanishes exactly
    if not denom > 1e-12:
        raise ValueError("adjusted length undefined: block functional is identically zero")
    return float(L / denom)


def _cos_terms(x, idx):
    idx = np.asarray(idx)
    out = np.sqrt(2.0) * np.cos(np.pi * np.outer(x, idx))
    out[:, idx == 0] = 1.0
    return out


def _unit_gauss(count, panels=None):
    """Composite Gauss-Legendre nodes/weights on [0, 1]."""
    order = 16
    panels = panels or max(1, count // order)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[:-1], edges[1:]
    nodes = ((b - a)[:, None] * (x + 1) / 2 + a[:, None]).ravel()
    weights = ((b - a)[:, None] * w / 2).ravel()
    return nodes, weights

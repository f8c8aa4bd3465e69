"""Cosine basis, empirical Fourier coefficients and characteristic-function slices.

Everything here is a pure function of its inputs. The cosine basis on [0, 1] is
``phi_0 = 1`` and ``phi_j(x) = sqrt(2) cos(pi j x)``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadratureWarning",
    "CharSlice",
    "cosine_eval",
    "cosine_matrix",
    "simpson_weights",
    "empirical_theta",
    "empirical_h",
    "synth_sq",
    "invert_char",
]

SQRT2 = np.sqrt(2.0)


class QuadratureWarning(UserWarning):
    """The u-grid is too coarse for the requested evaluation point."""


def _check_unit(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return x


def cosine_eval(j, x):
    """Evaluate ``phi_j(x)``; ``x`` may be a scalar or an array inside [0, 1]."""
    j = int(j)
    if j < 0:
        raise ValueError("cosine index must be nonnegative")
    x = _check_unit(x)
    if j == 0:
        out = np.ones_like(x)
    else:
        out = SQRT2 * np.cos(np.pi * j * x)
    return float(out) if out.ndim == 0 else out


def cosine_matrix(x, n_terms, start=0):
    """Matrix ``M[l, j - start] = phi_j(x_l)`` for ``j = start .. start + n_terms - 1``.

    No domain check; callers pass points already known to be in [0, 1] or
    deliberately evaluate the even periodic extension.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    j = np.arange(start, start + n_terms)
    out = SQRT2 * np.cos(np.pi * np.outer(x, j))
    if start == 0 and n_terms > 0:
        out[:, 0] = 1.0
    return out


def simpson_weights(n_nodes, h):
    """Composite Simpson weights for ``n_nodes`` equispaced nodes (odd count)."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of nodes >= 3")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _pair_arrays(y, x, phat_values):
    y = np.asarray(y, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValueError("empty data")
    if y.shape != x.shape:
        raise ValueError("y and x must have the same length")
    p = np.asarray(phat_values, dtype=float).reshape(-1)
    if p.shape != x.shape:
        raise ValueError("design density values must match x")
    if np.any(p <= 0):
        raise ValueError("design density estimate must be strictly positive")
    return y, x, p


def empirical_theta(y, x, phat, j, r):
    """Empirical coefficient ``n^-1 sum I(Y in [0,1]) phi_j(Y) phi_r(X) / phat(X)``.

    ``phat`` is any callable returning the design density at ``x`` (a
    :class:`~epcde.design.DesignDensityEstimate` works).
    """
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    y, x_arr, p = _pair_arrays(y, x_arr, phat(x_arr) if x_arr.size else [])
    inside = (y >= 0.0) & (y <= 1.0)
    yc = np.where(inside, y, 0.0)
    terms = inside * cosine_matrix(yc, 1, start=j)[:, 0] * cosine_matrix(x_arr, 1, start=r)[:, 0] / p
    return float(terms.sum() / y.size)


@dataclass(frozen=True)
class CharSlice:
    """Samples of one characteristic-function coefficient ``h_r(u)`` on a u-grid."""

    r: int
    u_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if u.ndim != 1 or v.shape != u.shape:
            raise ValueError("values must match u_grid")
        if u.size > 1 and np.any(np.diff(u) <= 0):
            raise ValueError("u_grid must be strictly increasing")
        object.__setattr__(self, "u_grid", u)
        object.__setattr__(self, "values", v)


def _check_grid(u_grid):
    u = np.asarray(u_grid, dtype=float).reshape(-1)
    if np.any(u < 0):
        raise ValueError("u_grid must be nonnegative")
    if u.size > 1 and np.any(np.diff(u) <= 0):
        raise ValueError("u_grid must be strictly increasing")
    return u


def char_weights_matrix(y, x, phat_values, r_values, u_grid):
    """All slices at once: ``H[i, m] = n^-1 sum exp(i u_m Y) phi_{r_i}(X) / phat(X)``."""
    y, x, p = _pair_arrays(y, x, phat_values)
    u = _check_grid(u_grid)
    r_values = np.asarray(r_values, dtype=int)
    W = SQRT2 * np.cos(np.pi * np.outer(x, r_values))
    W[:, r_values == 0] = 1.0
    W /= p[:, None]
    phase = np.outer(y, u)
    # real and imaginary parts separately keep the product in float64 BLAS
    re = W.T @ np.cos(phase)
    im = W.T @ np.sin(phase)
    return (re + 1j * im) / y.size


def empirical_h(y, x, phat, r, u_grid):
    """Empirical characteristic slice ``h_r`` on ``u_grid`` as a :class:`CharSlice`."""
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    vals = char_weights_matrix(y, x_arr, phat(x_arr) if x_arr.size else [], [int(r)], u_grid)[0]
    return CharSlice(int(r), np.asarray(u_grid, dtype=float), vals)


def synth_sq(coeffs, y, x):
    """Partial sum ``sum value * phi_j(y) * phi_r(x)`` over ``(j, r, value)`` triples."""
    y = _check_unit(y, "y")
    x = _check_unit(x, "x")
    total = np.zeros(np.broadcast(y, x).shape)
    for j, r, value in coeffs:
        total = total + value * cosine_eval(j, y) * cosine_eval(r, x)
    return float(total) if total.ndim == 0 else total


def invert_char(u_grid, values, y, breaks=None, weights=None):
    """``pi^-1 * integral Re{values(u) exp(-i u y)} du`` by composite Simpson.

    Parameters
    ----------
    u_grid : array
        Equispaced, strictly increasing nodes.
    values : complex array
        Aggregate sampled on ``u_grid``.
    y : float or array
        Evaluation points.
    breaks : sequence of float, optional
        Segment endpoints (must be nodes of ``u_grid``); Simpson is applied on
        each segment separately. Defaults to the whole grid.
    weights : array, optional
        Precomputed quadrature weights; overrides ``breaks``.
    """
    u = _check_grid(u_grid)
    v = np.asarray(values, dtype=complex).reshape(-1)
    if v.shape != u.shape:
        raise ValueError("values must match u_grid")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if weights is None:
        weights = segment_simpson_weights(u, breaks)
    if u.size > 1:
        du = u[1] - u[0]
        if du * np.max(np.abs(y_arr)) > np.pi / 4:
            warnings.warn(
                "u-grid step times |y| exceeds pi/4; inversion may be inaccurate",
                QuadratureWarning,
                stacklevel=2,
            )
    phase = np.outer(y_arr, u)
    wv = weights * v
    out = (np.cos(phase) @ wv.real + np.sin(phase) @ wv.imag) / np.pi
    return float(out[0]) if np.ndim(y) == 0 else out


def segment_simpson_weights(u, breaks=None):
    """Simpson weights on ``u`` applied piecewise between consecutive ``breaks``."""
    u = np.asarray(u, dtype=float)
    if u.size < 3:
        raise ValueError("need at least 3 nodes")
    h = u[1] - u[0]
    if breaks is None:
        breaks = (u[0], u[-1])
    idx = np.rint((np.asarray(breaks, dtype=float) - u[0]) / h).astype(int)
    if np.any(np.abs(u[0] + idx * h - np.asarray(breaks)) > 1e-9 * max(1.0, abs(u[-1]))):
        raise ValueError("breaks must fall on grid nodes")
    w = np.zeros_like(u)
    for a, b in zip(idx[:-1], idx[1:]):
        w[a:b + 1] += simpson_weights(b - a + 1, h)
    return w

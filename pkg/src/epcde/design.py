"""Design densities: estimation, fixed and random predictor generation, optimal designs."""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fourier_core import cosine_matrix

__all__ = [
    "DesignDensityEstimate",
    "DesignSpec",
    "estimate_design",
    "generate_fixed_design",
    "sample_random_design",
    "optimal_design",
    "integer_root",
    "lnln",
]

MIN_N = 16


def integer_root(n, k):
    """Largest integer ``m`` with ``m**k <= n``; immune to float rounding."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    m = int(round(n ** (1.0 / k)))
    while m ** k > n:
        m -= 1
    while (m + 1) ** k <= n:
        m += 1
    return m


def lnln(n):
    return math.log(math.log(n))


@dataclass(frozen=True)
class DesignDensityEstimate:
    """Truncated cosine-series estimate of the design density.

    ``coeffs[r - 1]`` is the empirical coefficient of ``phi_r``; the constant
    term is fixed at one so the untruncated series integrates to one.
    """

    coeffs: np.ndarray
    floor: float
    n: int

    def pilot(self, x):
        """Untruncated series ``1 + sum coeffs[r] phi_r(x)``."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        vals = 1.0 + cosine_matrix(flat, self.coeffs.size, start=1) @ self.coeffs
        return vals.reshape(x.shape)

    def __call__(self, x):
        return np.maximum(self.floor, self.pilot(x))


def estimate_design(x_samples):
    """Series estimate of the design density from predictors in [0, 1].

    Uses ``floor(n^(1/3))`` cosine terms and truncates from below at
    ``1 / ln ln n``. For ``n < 16`` that floor exceeds one; the estimate is
    still returned but a warning is issued, and the conditional-density fit
    refuses such samples.
    """
    x = np.asarray(x_samples, dtype=float).reshape(-1)
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 predictor values")
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
        raise ValueError("predictor values must lie in [0, 1]")
    if n < MIN_N:
        warnings.warn(f"n={n} < {MIN_N}: truncation floor 1/lnln(n) exceeds one", stacklevel=2)
    n_terms = integer_root(n, 3)
    coeffs = cosine_matrix(x, n_terms, start=1).mean(axis=0)
    return DesignDensityEstimate(coeffs=coeffs, floor=1.0 / lnln(n), n=n)


# Gauss-Legendre table used to build cumulative distribution functions.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass
class DesignSpec:
    """Design kind plus a positive density on [0, 1].

    ``cdf``/``ppf`` may be supplied when known in closed form; otherwise they
    are built from ``density`` by panelled Gauss-Legendre integration and
    bisection.
    """

    kind: str
    density: Callable
    tol: float = 1e-6
    cdf: Optional[Callable] = None
    ppf: Optional[Callable] = None
    _table: Optional[tuple] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("fixed", "random"):
            raise ValueError("kind must be 'fixed' or 'random'")
        grid = np.linspace(0.0, 1.0, 1001)
        vals = np.asarray(self.density(grid), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError("design density must be positive on [0, 1]")
        mass = self._cumulative()[-1]
        if abs(mass - 1.0) > self.tol:
            raise ValueError(f"design density integrates to {mass:.8g}, not 1")

    @classmethod
    def uniform(cls, kind="random"):
        ident = lambda t: np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return cls(kind, lambda t: np.ones_like(np.asarray(t, dtype=float)), cdf=ident, ppf=ident)

    def _cumulative(self, panels=512):
        if self._table is None:
            edges = np.linspace(0.0, 1.0, panels + 1)
            a, b = edges[:-1], edges[1:]
            nodes = (b - a)[:, None] * (_GL_X + 1) / 2 + a[:, None]
            masses = (np.asarray(self.density(nodes), dtype=float) * _GL_W).sum(axis=1) * (b - a) / 2
            self._table = (edges, np.concatenate([[0.0], np.cumsum(masses)]))
        return self._table[1]

    def cdf_values(self, x):
        if self.cdf is not None:
            return np.asarray(self.cdf(x), dtype=float)
        self._cumulative()
        edges, cum = self._table
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        k = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, edges.size - 2)
        a = edges[k]
        half = (x - a) / 2
        nodes = a[..., None] + half[..., None] * (_GL_X + 1)
        part = (np.asarray(self.density(nodes), dtype=float) * _GL_W).sum(axis=-1) * half
        return cum[k] + part

    def quantile(self, q, tol=1e-12, max_iter=200):
        """Invert the CDF by vectorised bisection to ``|F(x) - q| <= tol``."""
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("quantile levels must lie in [0, 1]")
        if self.ppf is not None:
            return np.asarray(self.ppf(q), dtype=float)
        lo = np.zeros_like(q)
        hi = np.ones_like(q)
        mid = 0.5 * (lo + hi)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            f = self.cdf_values(mid)
            done = np.abs(f - q) <= tol
            if np.all(done | (hi - lo <= 4 * np.finfo(float).eps)):
                break
            below = f < q
            lo = np.where(below & ~done, mid, lo)
            hi = np.where(~below & ~done, mid, hi)
        else:
            raise RuntimeError("CDF inversion did not converge; is the density positive and integrable?")
        return mid


def generate_fixed_design(spec, n):
    """Ordered fixed design: consecutive cells each carry mass ``1/(n+1)``."""
    if spec.kind != "fixed":
        raise ValueError("generate_fixed_design needs a fixed design spec")
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    levels = np.arange(1, n + 1) / (n + 1)
    return spec.quantile(levels)


def sample_random_design(spec, n, seed):
    """``n`` independent predictors drawn by inverse CDF; reproducible per seed."""
    if spec.kind != "random":
        raise ValueError("sample_random_design needs a random design spec")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(int(n))
    return spec.quantile(u)


def _normalize(values_fn, name):
    panels = 256
    edges = np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[:-1], edges[1:]
    nodes = (b - a)[:, None] * (_GL_X + 1) / 2 + a[:, None]
    vals = np.asarray(values_fn(nodes), dtype=float)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError(f"{name} must be positive on [0, 1]")
    total = float((vals * _GL_W).sum() * (b - a)[0] / 2)

    def density(x):
        return np.asarray(values_fn(np.asarray(x, dtype=float)), dtype=float) / total

    return density


def optimal_design(target, func):
    """Optimal design density.

    ``target='regression'``: ``func`` is the scale function and the optimum is
    proportional to it. ``target='cdensity'``: ``func`` is the conditional
    mass ``x -> integral_A f(y|x) dy`` and the optimum is proportional to its
    square root.
    """
    if target == "regression":
        return _normalize(lambda x: np.asarray(func(x), dtype=float), "sigma")
    if target == "cdensity":

        def root(x):
            m = np.asarray(func(x), dtype=float)
            if np.any(m <= 0):
                raise ValueError("mass must be positive on [0, 1]")
            return np.sqrt(m)

        return _normalize(root, "mass")
    raise ValueError("target must be 'regression' or 'cdensity'")

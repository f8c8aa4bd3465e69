"""Synthetic truth models, datasets, ISE quadrature and the Monte Carlo study."""

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import estimator as ep
from .blocks import build_schedule
from .design import DesignSpec, generate_fixed_design, sample_random_design
from .fourier_core import cosine_matrix, simpson_weights
from .oracle import (
    TrueModel,
    kernel_sub_oracle,
    kernel_super_oracle,
    oracle_fit,
    oracle_weights,
    true_functionals,
    univariate_ep_density,
)

__all__ = [
    "ErrorLaw",
    "TrigPolynomial",
    "Constant",
    "ModelSpec",
    "GridSpec",
    "StudyConfig",
    "MonteCarloReport",
    "generate_dataset",
    "ise",
    "ise_coefficients",
    "ise_univariate",
    "run_study",
    "rate_regression",
    "parse_config",
    "load_config",
    "replicate_rng",
]

ESTIMATORS = ("ep", "oracle", "super", "sub", "uni_ep")


@dataclass(frozen=True)
class ErrorLaw:
    """Standardized error law: ``normal``, ``truncnorm`` on ``[a, b]`` or ``uniform`` on [0, 1]."""

    name: str = "normal"
    a: float = -2.0
    b: float = 2.0

    def __post_init__(self):
        if self.name not in ("normal", "truncnorm", "uniform"):
            raise ValueError(f"unknown error law {self.name!r}")
        if self.name == "truncnorm" and not self.a < self.b:
            raise ValueError("truncation bounds must satisfy a < b")

    @property
    def _dist(self):
        if self.name == "normal":
            return stats.norm()
        if self.name == "truncnorm":
            return stats.truncnorm(self.a, self.b)
        return stats.uniform()

    def pdf(self, z):
        return self._dist.pdf(z)

    def ppf(self, q):
        return self._dist.ppf(q)

    @property
    def support(self):
        if self.name == "normal":
            return (-math.inf, math.inf)
        if self.name == "truncnorm":
            return (self.a, self.b)
        return (0.0, 1.0)

    def cf(self, t):
        """Characteristic function, or ``None`` when only quadrature is available."""
        if self.name == "normal":
            return np.exp(-0.5 * np.asarray(t, dtype=float) ** 2)
        return None


@dataclass(frozen=True)
class TrigPolynomial:
    """``c0 + sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)``."""

    c0: float = 0.0
    cos: tuple = ()
    sin: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.c0))
        for k, a in enumerate(self.cos, start=1):
            out = out + a * np.cos(2 * np.pi * k * x)
        for k, b in enumerate(self.sin, start=1):
            out = out + b * np.sin(2 * np.pi * k * x)
        return out


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value))


@dataclass
class ModelSpec:
    """Data-generating model.

    ``independent``: ``Y = error`` regardless of ``X``. ``additive``:
    ``Y = m(X) + sigma(X) * error``, so ``f(y|x) = q((y - m)/sigma) / sigma``.
    """

    kind: str
    design: DesignSpec
    response_domain: str = "real_line"
    error: ErrorLaw = field(default_factory=ErrorLaw)
    m: Callable = field(default_factory=lambda: Constant(0.0))
    sigma: Callable = field(default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        if self.kind not in ("independent", "additive"):
            raise ValueError("kind must be 'independent' or 'additive'")
        if self.response_domain not in ("unit_interval", "real_line"):
            raise ValueError("response_domain must be 'unit_interval' or 'real_line'")
        if self.kind == "independent":
            self.m, self.sigma = Constant(0.0), Constant(1.0)
        if np.any(np.asarray(self.sigma(np.linspace(0, 1, 257))) <= 0):
            raise ValueError("sigma must be positive")

    @property
    def loss(self):
        return "square" if self.response_domain == "unit_interval" else "line"

    def truth(self, window=8.0):
        q, m, s = self.error, self.m, self.sigma

        def cd(y, x):
            sx = s(x)
            return q.pdf((y - m(x)) / sx) / sx

        char = None
        if q.cf(0.0) is not None:

            def char(u, x):
                return np.exp(1j * u * m(x)) * q.cf(s(x) * u)

        lo, hi = q.support

        def y_support(x):
            return m(x) + s(x) * lo, m(x) + s(x) * hi

        support = "unit_square" if self.response_domain == "unit_interval" else "line_strip"
        return TrueModel(cd, self.design, char=char, support=support, y_support=y_support, window=window)


def generate_dataset(model, n, seed):
    """Draw ``n`` pairs: predictors from the design, then responses by inverse CDF."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if model.design.kind == "fixed":
        x = generate_fixed_design(model.design, n)
    else:
        x = sample_random_design(model.design, n, rng)
    u = np.clip(rng.random(n), 1e-300, 1.0 - 1e-16)
    y = model.m(x) + model.sigma(x) * model.error.ppf(u)
    return ep.SamplePairs(y=y, x=x, kind=model.design.kind)


# --- ISE -----------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Simpson grid: ``ny`` response nodes and ``nx`` predictor nodes (both odd).

    Response nodes span [0, 1] under square loss and ``[-y_max, y_max]``
    under line loss.
    """

    ny: int = 641
    nx: int = 129
    y_max: float = 8.0

    def __post_init__(self):
        if self.ny < 3 or self.nx < 3 or self.ny % 2 == 0 or self.nx % 2 == 0:
            raise ValueError("grid sizes must be odd and >= 3")

    def nodes(self, loss):
        if loss == "square":
            y = np.linspace(0.0, 1.0, self.ny)
        else:
            y = np.linspace(-self.y_max, self.y_max, self.ny)
        x = np.linspace(0.0, 1.0, self.nx)
        wy = simpson_weights(self.ny, y[1] - y[0])
        wx = simpson_weights(self.nx, x[1] - x[0])
        return y, x, wy, wx


def _grid_values(est, y, x):
    if isinstance(est, ep.CondDensityFit):
        return ep.evaluate_grid(est, y, x)
    if callable(est):
        return np.asarray(est(y, x), dtype=float)
    grid = np.asarray(est, dtype=float)
    if grid.shape != (y.size, x.size):
        raise ValueError(f"grid shape {grid.shape} does not match ({y.size}, {x.size})")
    return grid


def ise(est, truth, loss, grid=None):
    """Integrated squared error of an estimate against a :class:`TrueModel`.

    ``est`` may be a fitted :class:`CondDensityFit`, a callable
    ``(y_grid, x_grid) -> [i, j]`` array, or a precomputed grid.
    """
    grid = grid or GridSpec()
    y, x, wy, wx = grid.nodes(loss)
    if loss == "line":
        _check_window(truth, grid.y_max)
    diff = _grid_values(est, y, x) - truth.cd(y[:, None], x[None, :])
    return float(wy @ diff ** 2 @ wx)


def _check_window(truth, y_max):
    saved = truth.window
    truth.window = y_max
    try:
        outside = truth.outside_mass()
    finally:
        truth.window = saved
    if outside > 1e-6:
        warnings.warn(f"truth mass outside [-{y_max}, {y_max}] is {outside:.2g}", stacklevel=3)


def ise_coefficients(est_coef, true_coef):
    """Square-loss ISE from cosine coefficient tables (Parseval)."""
    a = np.atleast_2d(np.asarray(est_coef, dtype=float))
    b = np.atleast_2d(np.asarray(true_coef, dtype=float))
    shape = np.maximum(a.shape, b.shape)
    pa = np.zeros(shape)
    pb = np.zeros(shape)
    pa[: a.shape[0], : a.shape[1]] = a
    pb[: b.shape[0], : b.shape[1]] = b
    return float(np.sum((pa - pb) ** 2))


def ise_univariate(density_values, truth_values, y, loss="line"):
    """Simpson ISE on an equispaced odd-sized ``y`` grid."""
    w = simpson_weights(y.size, y[1] - y[0])
    return float(w @ (np.asarray(density_values) - np.asarray(truth_values)) ** 2)


# --- Monte Carlo ---------------------------------------------------------

@dataclass
class StudyConfig:
    model: ModelSpec
    n_values: tuple
    replicates: int
    seed: int = 0
    loss: str = "line"
    estimators: tuple = ("ep", "super", "sub")
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ValueError("replicates must be >= 1")
        if not self.n_values or any(int(n) < 16 for n in self.n_values):
            raise ValueError("every n must be >= 16")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or "ep" not in self.estimators:
            raise ValueError(f"estimators must include 'ep' and be drawn from {ESTIMATORS}")
        if self.loss not in ("square", "line"):
            raise ValueError("loss must be 'square' or 'line'")
        if ({"super", "sub"} & set(self.estimators)) and self.model.kind != "independent":
            raise ValueError("kernel oracles compare against the Y marginal; use an independent model")


@dataclass
class MonteCarloReport:
    n_values: np.ndarray
    replicates: int
    seed: int
    ise: dict  # estimator -> (len(n_values), replicates) array, NaN on failure
    failures: np.ndarray
    median_ratio_super: Optional[np.ndarray] = None
    median_ratio_sub: Optional[np.ndarray] = None
    median_ratio_uni: Optional[np.ndarray] = None
    mean_ise_ep: Optional[np.ndarray] = None
    mean_ise_oracle: Optional[np.ndarray] = None


def replicate_rng(seed, n, rep):
    """Independent stream for one cell; depends only on ``(seed, n, rep)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(rep)]))


def _threads():
    raw = os.environ.get("EP_CDE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"EP_CDE_THREADS must be an integer, got {raw!r}") from None


class _Cell:
    """Per-n shared state: schedule, truth and (optionally) oracle weights."""

    def __init__(self, cfg, n, truth):
        self.cfg, self.n, self.truth = cfg, n, truth
        self.schedule = build_schedule(n, cfg.loss)
        self.weights = None
        if "oracle" in cfg.estimators:
            tf = true_functionals(truth, self.schedule, cfg.loss)
            self.weights = oracle_weights(truth, self.schedule, cfg.loss, n, tf)
        y, x, wy, wx = cfg.grid.nodes(cfg.loss)
        self.y, self.x, self.wy, self.wx = y, x, wy, wx
        self.true_grid = truth.cd(y[:, None], x[None, :])
        self.true_marginal = self.true_grid[:, 0]  # independent model only

    def _grid_ise(self, fit):
        diff = ep.evaluate_grid(fit, self.y, self.x) - self.true_grid
        return float(self.wy @ diff ** 2 @ self.wx)

    def run(self, rep):
        cfg = self.cfg
        data = generate_dataset(cfg.model, self.n, replicate_rng(cfg.seed, self.n, rep))
        out = {}
        fit = ep.fit(data, cfg.loss, self.schedule)
        out["ep"] = self._grid_ise(fit)
        if "oracle" in cfg.estimators:
            out["oracle"] = self._grid_ise(oracle_fit(data, self.truth, self.schedule, cfg.loss, weights=self.weights))
        if "super" in cfg.estimators:
            out["super"] = ise_univariate(kernel_super_oracle(data.y, self.y), self.true_marginal, self.y)
        if "sub" in cfg.estimators:
            out["sub"] = ise_univariate(kernel_sub_oracle(data.y, self.y), self.true_marginal, self.y)
        if "uni_ep" in cfg.estimators:
            uni = univariate_ep_density(data.y, self.schedule, cfg.loss)
            vals = uni(self.y)
            # Y independent of X: the univariate ISE equals the ISE over the strip
            out["uni_ep"] = ise_univariate(vals, self.true_marginal, self.y)
        return out


def _median(values):
    v = np.sort(values[np.isfinite(values)])
    if v.size == 0:
        return math.nan
    mid = v.size // 2
    return float(v[mid]) if v.size % 2 else float(0.5 * (v[mid - 1] + v[mid]))


def run_study(cfg):
    """Run every ``(n, replicate)`` cell and aggregate ISE medians and means."""
    n_values = np.asarray([int(n) for n in cfg.n_values])
    R = int(cfg.replicates)
    table = {name: np.full((n_values.size, R), np.nan) for name in cfg.estimators}
    failures = np.zeros(n_values.size, dtype=int)
    truth = cfg.model.truth(window=cfg.grid.y_max)
    if cfg.loss == "line":
        _check_window(truth, cfg.grid.y_max)
    workers = _threads()
    for i, n in enumerate(n_values):
        cell = _Cell(cfg, int(n), truth)

        def one(rep, cell=cell):
            try:
                return rep, cell.run(rep)
            except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                return rep, exc

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, range(R)))
        else:
            results = [one(rep) for rep in range(R)]
        for rep, res in results:
            if isinstance(res, Exception):
                failures[i] += 1
                continue
            for name, value in res.items():
                table[name][i, rep] = value

    def ratio(name):
        if name not in table:
            return None
        return np.array([_median(table["ep"][i] / table[name][i]) for i in range(n_values.size)])

    mean = lambda name: np.nanmean(table[name], axis=1) if name in table else None
    return MonteCarloReport(
        n_values=n_values,
        replicates=R,
        seed=int(cfg.seed),
        ise=table,
        failures=failures,
        median_ratio_super=ratio("super"),
        median_ratio_sub=ratio("sub"),
        median_ratio_uni=ratio("uni_ep"),
        mean_ise_ep=mean("ep"),
        mean_ise_oracle=mean("oracle"),
    )


def rate_regression(n_values, mean_ise):
    """Least-squares slope and intercept of ``ln ISE`` on ``ln n``."""
    n = np.asarray(n_values, dtype=float)
    e = np.asarray(mean_ise, dtype=float)
    if n.shape != e.shape or np.unique(n).size < 3:
        raise ValueError("need at least 3 distinct sample sizes")
    if np.any(e <= 0) or np.any(n <= 0):
        raise ValueError("sample sizes and ISE values must be positive")
    slope, intercept = np.polyfit(np.log(n), np.log(e), 1)
    return float(slope), float(intercept)


# --- config --------------------------------------------------------------

_CONFIG_KEYS = {
    "model", "error", "error_a", "error_b", "m_c0", "m_cos", "m_sin", "sigma",
    "design", "n", "replicates", "seed", "loss", "estimators", "ny", "nx", "y_max",
}


def _floats(text):
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def parse_config(text):
    """Build a :class:`StudyConfig` from flat ``key = value`` lines."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for key in ("n", "replicates", "seed"):
        if key not in raw:
            raise ValueError(f"missing required key {key!r}")
    try:
        design_kind = raw.get("design", "random")
        if design_kind not in ("random", "fixed"):
            raise ValueError("design must be 'random' or 'fixed'")
        error = ErrorLaw(raw.get("error", "normal"), float(raw.get("error_a", -2.0)), float(raw.get("error_b", 2.0)))
        kind = raw.get("model", "independent")
        loss = raw.get("loss", "line")
        model = ModelSpec(
            kind=kind,
            design=DesignSpec.uniform(design_kind),
            response_domain="unit_interval" if loss == "square" else "real_line",
            error=error,
            m=TrigPolynomial(float(raw.get("m_c0", 0.0)), _floats(raw.get("m_cos", "")), _floats(raw.get("m_sin", ""))),
            sigma=Constant(float(raw.get("sigma", 1.0))),
        )
        grid = GridSpec(int(raw.get("ny", 641)), int(raw.get("nx", 129)), float(raw.get("y_max", 8.0)))
        estimators = tuple(s.strip() for s in raw.get("estimators", "ep,super,sub").split(",") if s.strip())
        return StudyConfig(
            model=model,
            n_values=tuple(int(v) for v in raw["n"].split(",")),
            replicates=int(raw["replicates"]),
            seed=int(raw["seed"]),
            loss=loss,
            estimators=estimators,
            grid=grid,
        )
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid config: {exc}") from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())

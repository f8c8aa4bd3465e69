"""Blockwise-shrinkage conditional density estimation on [0, 1] predictors."""

from .blocks import BlockSchedule, build_schedule
from .design import DesignSpec, estimate_design, generate_fixed_design, optimal_design, sample_random_design
from .estimator import CondDensityFit, EPConditionalDensity, SamplePairs, evaluate, evaluate_grid, fit, project_nonneg
from .oracle import TrueModel, oracle_fit, oracle_mise_expression, true_functionals, univariate_ep_density
from .risk import SmoothnessClass, class_risk, pinsker_aniso, pinsker_uni, solve_eta

__version__ = "0.1.0"

__all__ = [
    "BlockSchedule",
    "build_schedule",
    "DesignSpec",
    "estimate_design",
    "generate_fixed_design",
    "sample_random_design",
    "optimal_design",
    "CondDensityFit",
    "EPConditionalDensity",
    "SamplePairs",
    "fit",
    "evaluate",
    "evaluate_grid",
    "project_nonneg",
    "TrueModel",
    "oracle_fit",
    "oracle_mise_expression",
    "true_functionals",
    "univariate_ep_density",
    "SmoothnessClass",
    "class_risk",
    "pinsker_uni",
    "pinsker_aniso",
    "solve_eta",
]

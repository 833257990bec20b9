"""Minimum information checkerboard copulas via iterated I-projections."""
from .checkerboard import CheckerboardModel, CopulaFamily, approximation_gap, checkerboard_cdf, sample, skeleton_from_copula
from .constraints import (
    MarginConstraint,
    MomentConstraint,
    ProblemSpec,
    residuals,
    spearman_constraint,
    spearman_moment_array,
    spearman_of_array,
)
from .errors import MinCopulaError
from .prob_array import GridShape, MomentArray, ProbArray, kl_divergence, margin
from .projections import exp_tilt_project, gis_project, marginal_scaling, partition_scaling
from .solver import SolveReport, SolverConfig, compare_procedures, solve

__version__ = "0.1.0"

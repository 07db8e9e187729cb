"""Bounds on extreme Value-at-Risk under extremal-coefficient constraints."""

from .calibration import project_to_consistent
from .closed_form import BoundsResult, Method, dvariate_bounds, frechet_bounds, lower_bound_L, upper_bound_U
from .core import ExtremalCoefficients, MobiusWeights, SubsetFamily, SubsetId, check_consistency, mobius_invert
from .errors import XvarError
from .estimation import LossPanel, TailModel, common_xi_fit, estimate_extremal_coeffs, fit_gpd
from .mkt_sectors import SectorPartition, composite_bound, solve_beta
from .simulate import sample_max_stable, sample_rv_portfolio, theta_of_measure
from .tm_lp import DiscreteSpectralMeasure, KktCertificate, build_tm_lp, solve_lower_bound, verify_kkt

__version__ = "0.1.0"

__all__ = [
    "BoundsResult",
    "DiscreteSpectralMeasure",
    "ExtremalCoefficients",
    "KktCertificate",
    "LossPanel",
    "Method",
    "MobiusWeights",
    "SectorPartition",
    "SubsetFamily",
    "SubsetId",
    "TailModel",
    "XvarError",
    "build_tm_lp",
    "check_consistency",
    "common_xi_fit",
    "composite_bound",
    "dvariate_bounds",
    "estimate_extremal_coeffs",
    "fit_gpd",
    "frechet_bounds",
    "lower_bound_L",
    "mobius_invert",
    "project_to_consistent",
    "sample_max_stable",
    "sample_rv_portfolio",
    "solve_beta",
    "solve_lower_bound",
    "theta_of_measure",
    "upper_bound_U",
    "verify_kkt",
]

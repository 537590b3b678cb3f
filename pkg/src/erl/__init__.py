"""Escape rates, localized escape rates and return-cluster statistics for
open dynamical systems with shrinking holes."""

from .automaton import BudgetExceeded, build_automaton
from .clusters import (EIProfile, alpha_levels, beta_hat, ei_profile, extremal_index_alpha1, extremal_index_theta,
                       hat_alpha, lambda_direct, lambda_via_theorem, periodic_theta)
from .cylinders import (CylinderUnion, GoodnessReport, NeighborhoodSystem, essential_period, goodness_check,
                        measure_of, outer_approximation, period, point_family, refine, shifted_intersection)
from .escape import (LocalizedRateTable, RateEstimate, SurvivalCurve, block_bound_audit, conditional_escape_rate,
                     entry_return_identity_audit, escape_rate_exact, localized_escape_rate,
                     rate_of_difference_sequence, short_entry_ratio, survival_exact, survival_mc)
from .markov import MarkovMeasure, PathSampler, mixing_proxy, sample_path, stationary_from_transitions, word_measure

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "build_automaton",
    "EIProfile",
    "alpha_levels",
    "beta_hat",
    "ei_profile",
    "extremal_index_alpha1",
    "extremal_index_theta",
    "hat_alpha",
    "lambda_direct",
    "lambda_via_theorem",
    "periodic_theta",
    "CylinderUnion",
    "GoodnessReport",
    "NeighborhoodSystem",
    "essential_period",
    "goodness_check",
    "measure_of",
    "outer_approximation",
    "period",
    "point_family",
    "refine",
    "shifted_intersection",
    "LocalizedRateTable",
    "RateEstimate",
    "SurvivalCurve",
    "block_bound_audit",
    "conditional_escape_rate",
    "entry_return_identity_audit",
    "escape_rate_exact",
    "localized_escape_rate",
    "rate_of_difference_sequence",
    "short_entry_ratio",
    "survival_exact",
    "survival_mc",
    "MarkovMeasure",
    "PathSampler",
    "mixing_proxy",
    "sample_path",
    "stationary_from_transitions",
    "word_measure",
]

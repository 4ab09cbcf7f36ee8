"""Measurement of AI propensities and capabilities with logistic response models."""

from .errors import *  # noqa: F401,F403
from .estimation import (
    FitConfig,
    FitResult,
    OutcomeRecord,
    empirical_icc,
    empirical_point_collapse,
    empirical_surface,
    fit,
    fit_capability,
    fit_propensity,
    initialize_theta,
    log_likelihood,
)
from .model import (
    CapabilityItem,
    PropensityWindow,
    ResponseParams,
    boundary_probability,
    derive_params,
    p_capability,
    p_propensity,
    p_propensity_unnormalized,
    sigmoid,
)

__version__ = "0.1.0"

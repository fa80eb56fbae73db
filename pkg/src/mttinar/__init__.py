"""Mixture binomial / negative-binomial thinning threshold INAR(1) models.

Simulation, exact transition probabilities, CLS and CML estimation, threshold
search, Wald tests for a piecewise structure, and h-step forecasting.
"""

__version__ = "0.1.0"

from .cls import MeanFit, cls_covariance, cls_fit
from .cml import LikelihoodEval, cml_covariance, cml_fit, conditional_log_likelihood
from .errors import (
    ConvergenceError,
    DomainError,
    InputError,
    InsufficientRegimeDataError,
    MTTINARError,
    NumericalError,
    ParseError,
    SingularDesignError,
    SingularInformationError,
    TruncationError,
)
from .forecast import (
    DiagnosticsReport,
    ForecastPMF,
    fit_scores,
    forecast_error_metrics,
    h_step_distribution,
    pearson_residuals,
    point_forecasts,
    rolling_forecast_evaluation,
    transition_matrix,
)
from .hypothesis import TestResult, VarianceFit, variance_cls_fit, wald_mean_test, wald_variance_test
from .io import load_series
from .model import (
    ModelSpec,
    RegimeKind,
    conditional_moments,
    draw_binomial_thin,
    draw_innovation,
    draw_nb_thin,
    make_rng,
    regime_of,
    simulate,
    stationary_distribution,
    theoretical_moments,
    transition_probability,
)
from .threshold import (
    ThresholdSearchResult,
    candidate_range,
    dness_search,
    search_r_cls_var,
    search_r_cml,
)

__all__ = [
    "__version__",
    "MeanFit",
    "cls_covariance",
    "cls_fit",
    "LikelihoodEval",
    "cml_covariance",
    "cml_fit",
    "conditional_log_likelihood",
    "ConvergenceError",
    "DomainError",
    "InputError",
    "InsufficientRegimeDataError",
    "MTTINARError",
    "NumericalError",
    "ParseError",
    "SingularDesignError",
    "SingularInformationError",
    "TruncationError",
    "DiagnosticsReport",
    "ForecastPMF",
    "fit_scores",
    "forecast_error_metrics",
    "h_step_distribution",
    "pearson_residuals",
    "point_forecasts",
    "rolling_forecast_evaluation",
    "transition_matrix",
    "TestResult",
    "VarianceFit",
    "variance_cls_fit",
    "wald_mean_test",
    "wald_variance_test",
    "load_series",
    "ModelSpec",
    "RegimeKind",
    "conditional_moments",
    "draw_binomial_thin",
    "draw_innovation",
    "draw_nb_thin",
    "make_rng",
    "regime_of",
    "simulate",
    "stationary_distribution",
    "theoretical_moments",
    "transition_probability",
    "ThresholdSearchResult",
    "candidate_range",
    "dness_search",
    "search_r_cls_var",
    "search_r_cml",
]

"""Residual diagnostics and h-step forecasting through powers of the transition matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cls import MeanFit
from .cml import loglik_at
from .errors import DomainError, InputError, TruncationError
from .model import ModelSpec, default_max_state, regime_mask, truncated_kernel
from .series import as_series, transitions

ROW_DEFICIT_LIMIT = 1e-6
N_PARAMS = 3


@dataclass
class TransitionMatrix:
    matrix: np.ndarray
    deficits: np.ndarray

    @property
    def max_state(self) -> int:
        return self.matrix.shape[0] - 1


@dataclass
class ForecastPMF:
    horizon: int
    origin: int
    probabilities: np.ndarray
    truncation_mass: float
    warning: bool = False

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probabilities.size)


@dataclass
class PointForecasts:
    mean: float
    mode: int
    median: int


@dataclass
class DiagnosticsReport:
    pearson_residuals: np.ndarray = field(repr=False)
    residual_mean: float
    residual_variance: float
    rms: float = float("nan")
    aic: float = float("nan")
    bic: float = float("nan")
    loglik: float = float("nan")


def transition_matrix(spec: ModelSpec, max_state=None) -> TransitionMatrix:
    """Row-normalized kernel on ``0..max_state`` with each row's lost mass recorded."""
    if max_state is None:
        max_state = default_max_state(spec)
    P = truncated_kernel(spec, max_state)
    mass = P.sum(axis=1)
    deficits = 1.0 - mass
    worst = float(deficits.max())
    if worst > ROW_DEFICIT_LIMIT:
        raise TruncationError(
            f"a row loses {worst:.3g} probability at max_state={max_state}",
            suggested_max_state=default_max_state(spec, observed_max=max_state),
        )
    return TransitionMatrix(P / mass[:, None], deficits)


def matrix_power(P, h):
    """``P**h`` by repeated squaring."""
    if h < 0:
        raise InputError("horizon must be nonnegative")
    result = np.eye(P.shape[0])
    base = P.copy()
    while h:
        if h & 1:
            result = result @ base
        h >>= 1
        if h:
            base = base @ base
    return result


def h_step_distribution(spec: ModelSpec, x_now, h, max_state=None, tm: TransitionMatrix = None) -> ForecastPMF:
    """Distribution of ``X_{t+h}`` given ``X_t = x_now``.

    ``truncation_mass`` bounds the probability lost to truncation over ``h``
    steps by ``h`` times the worst row deficit.
    """
    if h < 1:
        raise InputError("horizon must be at least 1")
    if tm is None:
        if max_state is None:
            max_state = default_max_state(spec, observed_max=int(x_now))
        tm = transition_matrix(spec, max_state)
    if not 0 <= x_now <= tm.max_state:
        raise InputError(f"origin {x_now} is outside 0..{tm.max_state}")
    # propagate a row vector instead of forming P**h when h is small
    if h <= 64:
        row = np.zeros(tm.max_state + 1)
        row[int(x_now)] = 1.0
        for _ in range(h):
            row = row @ tm.matrix
    else:
        row = matrix_power(tm.matrix, h)[int(x_now)]
    row = np.clip(row, 0, None)
    row /= row.sum()
    lost = min(1.0, h * float(tm.deficits.max(initial=0.0)))
    return ForecastPMF(int(h), int(x_now), row, lost, warning=lost >= 1e-8)


def point_forecasts(pmf) -> PointForecasts:
    """Mean, mode (smallest on ties) and median (smallest ``j`` with CDF >= 1/2)."""
    p = np.asarray(getattr(pmf, "probabilities", pmf), dtype=float)
    j = np.arange(p.size)
    mean = float(j @ p)
    mode = int(np.argmax(p))
    cdf = np.cumsum(p)
    median = int(np.searchsorted(cdf, 0.5 - 1e-12))
    return PointForecasts(mean, mode, min(median, p.size - 1))


def _fitted_moments(prev, params, r, R):
    phi1, phi2, lam = params
    low = regime_mask(prev, r, R)
    xp = prev.astype(float)
    mean = np.where(low, phi1, phi2) * xp + lam
    var = np.where(low, phi1 * (1 - phi1) * xp + lam, phi2 * (1 + phi2) * xp + lam * (1 + lam))
    return mean, var


def _params(fit):
    if isinstance(fit, MeanFit):
        return fit.params
    return np.asarray(fit, dtype=float)


def pearson_residuals(series, fit, r, R=0, x0=None) -> DiagnosticsReport:
    """Standardized residuals ``(x_t - mean_t) / sqrt(var_t)`` at the fitted parameters."""
    prev, curr = transitions(series, x0)
    mean, var = _fitted_moments(prev, _params(fit), r, R)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise DomainError("fitted conditional variance is not positive")
    res = (curr - mean) / np.sqrt(var)
    return DiagnosticsReport(res, float(res.mean()), float(res.var(ddof=1)))


def information_criteria(loglik, m, k=N_PARAMS):
    return -2.0 * loglik + 2 * k, -2.0 * loglik + k * math.log(m)


def fit_scores(series, fit, r, R=0, x0=None) -> DiagnosticsReport:
    """Pearson residual summary plus RMS of one-step errors, log-likelihood, AIC and BIC."""
    report = pearson_residuals(series, fit, r, R, x0=x0)
    prev, curr = transitions(series, x0)
    mean, _ = _fitted_moments(prev, _params(fit), r, R)
    m = prev.size
    report.rms = float(math.sqrt(((curr - mean) ** 2).sum() / m))
    report.loglik = loglik_at(series, _params(fit), r, R, x0=x0)
    report.aic, report.bic = information_criteria(report.loglik, m)
    return report


@dataclass
class ErrorMetrics:
    bias: float
    made: float


def forecast_error_metrics(actuals, forecasts) -> ErrorMetrics:
    """Bias (forecast minus actual) and mean absolute deviation error."""
    a = np.asarray(actuals, dtype=float)
    f = np.asarray(forecasts, dtype=float)
    if a.ndim != 1 or a.shape != f.shape:
        raise InputError("actuals and forecasts must be 1-D sequences of equal length")
    if a.size == 0:
        raise InputError("at least one forecast is needed")
    e = f - a
    return ErrorMetrics(float(e.mean()), float(np.abs(e).mean()))


def rolling_forecast_evaluation(series, spec: ModelSpec, horizons, holdout=None, max_state=None):
    """Rolling-origin h-step evaluation over the last ``holdout`` observations.

    Each target ``x[t]`` in the hold-out block is forecast from origin
    ``x[t - h]``; ``holdout`` defaults to ``max(horizons)``. Returns a dict
    ``h -> {"mean": ErrorMetrics, "mode": ..., "median": ...}``.
    """
    x = as_series(series)
    horizons = [int(h) for h in horizons]
    if not horizons or min(horizons) < 1:
        raise InputError("horizons must be positive integers")
    if holdout is None:
        holdout = max(horizons)
    if holdout < 1 or holdout + max(horizons) > x.size:
        raise InputError("series too short for the requested hold-out and horizons")
    if max_state is None:
        max_state = default_max_state(spec, observed_max=int(x.max()))
    tm = transition_matrix(spec, max_state)
    targets = np.arange(x.size - holdout, x.size)
    out = {}
    for h in horizons:
        P_h = matrix_power(tm.matrix, h)
        preds = {"mean": [], "mode": [], "median": []}
        for t in targets:
            pf = point_forecasts(P_h[x[t - h]])
            preds["mean"].append(pf.mean)
            preds["mode"].append(pf.mode)
            preds["median"].append(pf.median)
        out[h] = {k: forecast_error_metrics(x[targets], v) for k, v in preds.items()}
    return out


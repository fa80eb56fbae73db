"""Wald tests for a piecewise structure and the variance-parameter least squares fit.

The conditional variance is modelled as ``sigma_k^2 * X_{t-1} + b_k`` in regime
``k``, and ``(sigma1^2, sigma2^2, b1, b2)`` is estimated by regressing squared
CLS residuals on ``(X_{t-1}, 1)`` separately in each regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import gammaincc

from .cls import COND_LIMIT, MeanFit, cls_fit, mean_residuals
from .errors import InputError, SingularDesignError, SingularInformationError
from .series import regime_split, transitions

LEVEL = 0.05


@dataclass
class VarianceFit:
    sigma1_sq: float
    sigma2_sq: float
    b1: float
    b2: float
    covariance: np.ndarray
    n_transitions: int

    @property
    def params(self) -> np.ndarray:
        return np.array([self.sigma1_sq, self.sigma2_sq, self.b1, self.b2])

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None) / self.n_transitions)


@dataclass(frozen=True)
class TestResult:
    """Outcome of a chi-square Wald test; ``p_value`` is the upper tail at ``statistic``."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    df: int
    p_value: float
    critical_value: float
    level: float = LEVEL

    @property
    def reject_at_05(self) -> bool:
        return self.statistic > chi2_critical(self.df, LEVEL)

    @property
    def reject(self) -> bool:
        return self.statistic > self.critical_value


def chi2_sf(x, df):
    """Upper tail of the chi-square law via the regularized upper incomplete gamma."""
    return float(gammaincc(df / 2.0, max(float(x), 0.0) / 2.0))


def chi2_critical(df, level=LEVEL):
    return float(stats.chi2.isf(level, df))


def _result(name, statistic, df, level):
    statistic = max(float(statistic), 0.0)
    return TestResult(name, statistic, df, chi2_sf(statistic, df), chi2_critical(df, level), level)


def _sandwich(V, W, what):
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > COND_LIMIT:
        raise SingularInformationError(f"{what} information matrix is singular")
    Vinv = np.linalg.inv(V)
    cov = Vinv @ W @ Vinv
    return (cov + cov.T) / 2


def _regime_ols(x, v):
    """Slope and intercept of ``v`` on ``x`` by the normal equations."""
    k = x.size
    sx, sv = x.sum(), v.sum()
    den = k * (x * x).sum() - sx * sx
    if den <= 0:
        raise SingularDesignError("lagged values are constant within a regime")
    slope = (k * (x * v).sum() - sx * sv) / den
    return slope, (sv - slope * sx) / k


def variance_cls_fit(series, r, R=0, mean_fit: Optional[MeanFit] = None, x0=None) -> VarianceFit:
    """Least squares fit of the regime-wise conditional variance lines.

    ``mean_fit`` defaults to the CLS fit at the same threshold. The returned
    covariance is the 4x4 sandwich of ``sqrt(m) * (vartheta_hat - vartheta)``.
    """
    prev, curr = transitions(series, x0)
    low = regime_split(prev, r, R, minimum=3)
    if mean_fit is None:
        mean_fit = cls_fit(series, r, R, x0=x0, with_covariance=False)
    xp = prev.astype(float)
    v = mean_residuals(xp, curr, low, mean_fit.phi1, mean_fit.phi2, mean_fit.lam) ** 2
    up = ~low
    s1, b1 = _regime_ols(xp[low], v[low])
    s2, b2 = _regime_ols(xp[up], v[up])

    d = v - np.where(low, s1 * xp + b1, s2 * xp + b2)
    grad = np.column_stack([xp * low, xp * up, low * 1.0, up * 1.0])
    m = xp.size
    V = grad.T @ grad / m
    W = (grad * (d * d)[:, None]).T @ grad / m
    cov = _sandwich(V, W, "variance CLS")
    return VarianceFit(float(s1), float(s2), float(b1), float(b2), cov, m)


def _contrast(est, cov, i, j, m):
    den = cov[i, i] + cov[j, j] - cov[i, j] - cov[j, i]
    if den <= 0:
        raise SingularInformationError("nonpositive variance of a Wald contrast")
    return m * (est[i] - est[j]) ** 2 / den


def wald_mean_test(series, r, R=0, x0=None, level=LEVEL, fit: Optional[MeanFit] = None) -> TestResult:
    """Chi-square(1) test of equal autoregressive coefficients across regimes."""
    if fit is None:
        fit = cls_fit(series, r, R, x0=x0)
    if fit.covariance is None:
        raise SingularInformationError("the mean fit carries no covariance")
    stat = _contrast(fit.params, fit.covariance, 0, 1, fit.n_transitions)
    return _result("Wald-E", stat, 1, level)


def wald_variance_test(
    series, r, R=0, x0=None, level=LEVEL, fit: Optional[VarianceFit] = None, form="sum"
) -> TestResult:
    """Chi-square(2) test that both variance slopes and both intercepts agree.

    ``form="sum"`` adds the two separately standardized squared contrasts.
    The contrasts are negatively correlated (slope and intercept estimates
    within a regime are), so this sum rejects somewhat more often than the
    nominal level under the null. ``form="joint"`` uses the full quadratic
    form ``m d' (C Sigma C')^-1 d`` instead, which is chi-square(2) in the limit.
    """
    if fit is None:
        fit = variance_cls_fit(series, r, R, x0=x0)
    est, cov, m = fit.params, fit.covariance, fit.n_transitions
    if form == "sum":
        stat = _contrast(est, cov, 0, 1, m) + _contrast(est, cov, 2, 3, m)
    elif form == "joint":
        C = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
        d = C @ est
        S = C @ cov @ C.T
        if np.linalg.cond(S) > COND_LIMIT:
            raise SingularInformationError("contrast covariance is singular")
        stat = m * d @ np.linalg.solve(S, d)
    else:
        raise InputError(f"unknown form {form!r}")
    return _result("Wald-Var", stat, 2, level)


def sequential_test(series, r, R=0, x0=None, level=LEVEL, form="sum"):
    """Mean test first; the variance test only runs when the mean test does not reject.

    Returns ``(mean_result, variance_result_or_None, structure_detected)``.
    """
    mean_res = wald_mean_test(series, r, R, x0=x0, level=level)
    if mean_res.reject:
        return mean_res, None, True
    var_res = wald_variance_test(series, r, R, x0=x0, level=level, form=form)
    return mean_res, var_res, var_res.reject

"""Threshold selection over an integer candidate range.

Three criteria are available: the maximized conditional log-likelihood, the
conditional-variance least squares score followed by a CLS refit, and the
doubly nested subsample search on the profiled CLS sum of squares. Ties are
always broken toward the smallest candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .cls import MeanFit, cls_fit
from .cml import _init_point, cml_fit, from_unconstrained, numerical_gradient
from .errors import InputError, InsufficientRegimeDataError, MTTINARError
from .model import regime_mask
from .series import as_series, transitions


@dataclass
class ThresholdSearchResult:
    r_hat: int
    per_candidate: dict
    fit_at_r_hat: MeanFit
    method: str
    skipped: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def candidate_range(series, lo_q=0.1, hi_q=0.9):
    """Type-1 empirical quantiles: the smallest value whose ECDF reaches ``q``."""
    if not 0 <= lo_q < hi_q <= 1:
        raise InputError("quantiles must satisfy 0 <= lo_q < hi_q <= 1")
    x = np.sort(as_series(series))
    n = x.size
    if n < 10:
        raise InputError("at least 10 observations are needed for a threshold range")

    def q(p):
        k = max(int(math.ceil(p * n - 1e-9)), 1)
        return int(x[k - 1])

    return q(lo_q), q(hi_q)


def _candidates(range_):
    lo, hi = int(range_[0]), int(range_[1])
    if hi < lo:
        raise InputError(f"empty candidate range [{lo}, {hi}]")
    return range(lo, hi + 1)


def _populated(prev, r, R, minimum=2):
    low = regime_mask(prev, r, R)
    return low.sum() >= minimum and (~low).sum() >= minimum


def _argbest(scores, maximize):
    # dict insertion order is ascending r, so the first optimum is the smallest r
    best_r, best = None, None
    for r, v in scores.items():
        if best is None or (v > best if maximize else v < best):
            best_r, best = r, v
    return best_r


def search_r_cml(series, R=0, range_=None, x0=None) -> ThresholdSearchResult:
    """Threshold maximizing the CML log-likelihood."""
    if range_ is None:
        range_ = candidate_range(series)
    prev, _ = transitions(series, x0)
    scores, fits, skipped = {}, {}, []
    for r in _candidates(range_):
        if not _populated(prev, r, R):
            skipped.append(r)
            continue
        try:
            fit = cml_fit(series, r, R, x0=x0, with_covariance=False)
        except MTTINARError:
            skipped.append(r)
            continue
        scores[r] = fit.loglik
        fits[r] = fit
    if not scores:
        raise InsufficientRegimeDataError("every threshold candidate was skipped")
    r_hat = _argbest(scores, maximize=True)
    return ThresholdSearchResult(r_hat, scores, fits[r_hat], "CMLGrid", skipped)


def variance_score(theta, prev, curr, low):
    """Sum of squared gaps between squared mean residuals and the conditional variance."""
    phi1, phi2, lam = theta
    xp = prev.astype(float)
    u = curr - np.where(low, phi1, phi2) * xp - lam
    cvar = np.where(low, phi1 * (1 - phi1) * xp + lam, phi2 * (1 + phi2) * xp + lam * (1 + lam))
    return float(((u * u - cvar) ** 2).sum())


def minimize_variance_score(series, r, R=0, x0=None, init=None):
    """Jointly minimize the variance score over ``theta`` on the unconstrained scale."""
    prev, curr = transitions(series, x0)
    low = regime_mask(prev, r, R)
    if init is None:
        init = cls_fit(series, r, R, x0=x0, with_covariance=False)
    scale = float(prev.size)

    def f(eta):
        if not np.all(np.isfinite(eta)) or np.any(np.abs(eta) > 700):
            return 1e300
        return variance_score(from_unconstrained(eta), prev, curr, low) / scale

    res = minimize(
        f, _init_point(init), jac=lambda e: numerical_gradient(f, e),
        method="BFGS", options={"gtol": 1e-8, "maxiter": 1000},
    )
    return from_unconstrained(res.x), float(res.fun) * scale


def search_r_cls_var(series, R=0, range_=None, x0=None) -> ThresholdSearchResult:
    """Two-step threshold estimate: minimize the variance score, then refit by CLS."""
    if range_ is None:
        range_ = candidate_range(series)
    prev, _ = transitions(series, x0)
    scores, thetas, skipped = {}, {}, []
    for r in _candidates(range_):
        if not _populated(prev, r, R):
            skipped.append(r)
            continue
        try:
            theta, score = minimize_variance_score(series, r, R, x0=x0)
        except MTTINARError:
            skipped.append(r)
            continue
        scores[r] = score
        thetas[r] = theta
    if not scores:
        raise InsufficientRegimeDataError("every threshold candidate was skipped")
    r_hat = _argbest(scores, maximize=False)
    fit = cls_fit(series, r_hat, R, x0=x0)
    return ThresholdSearchResult(
        r_hat, scores, fit, "VarianceCLS", skipped,
        info={"score_minimizer": {r: tuple(map(float, t)) for r, t in thetas.items()}},
    )


def _profiled_sse(xc, xp, lam):
    """Sum of squares of a single slope fitted with the intercept held at ``lam``."""
    den = (xp * xp).sum()
    if den == 0:
        return None
    beta = ((xc * xp).sum() - lam * xp.sum()) / den
    return float(((xc - beta * xp - lam) ** 2).sum())


def split_sse(prev, curr, r, lam):
    """Two-regime sum of squares at threshold ``r`` with the intercept fixed at ``lam``.

    Returns ``None`` when a regime has no positive lagged values.
    """
    xp = prev.astype(float)
    xc = curr.astype(float)
    low = xp <= r
    total = 0.0
    for mask in (low, ~low):
        part = _profiled_sse(xc[mask], xp[mask], lam)
        if part is None:
            return None
        total += part
    return total


def _one_regime_sse(xc, xp):
    """Ordinary least squares sum of squares with a free intercept."""
    design = np.column_stack([xp, np.ones_like(xp)])
    coef, *_ = np.linalg.lstsq(design, xc, rcond=None)
    resid = xc - design @ coef
    return float(resid @ resid)


def dness_gain(prev, curr, r, lam, baseline="free"):
    """One-regime minus two-regime sum of squares.

    ``baseline="free"`` fits the one-regime reference with its own intercept, so
    gains at different ``lam`` compare the two-regime fits directly.
    ``baseline="profiled"`` holds the reference intercept at ``lam`` too; the
    choice of ``r`` for a fixed ``lam`` is the same either way.
    """
    xp = prev.astype(float)
    xc = curr.astype(float)
    if baseline == "free":
        one = _one_regime_sse(xc, xp)
    elif baseline == "profiled":
        one = _profiled_sse(xc, xp, lam)
    else:
        raise InputError(f"unknown baseline {baseline!r}")
    two = split_sse(prev, curr, r, lam)
    if one is None or two is None:
        return None
    return one - two


def dness_search(
    series, R=0, lambda_lo=2.0, lambda_hi=6.0, L=4, range_=None, x0=None, baseline="free"
):
    """Profile the intercept over ``L + 1`` grid values and maximize the SSE gain.

    For each grid intercept the best threshold is found; the final threshold
    is the one whose gain is largest across the grid (see ``dness_gain``).
    """
    if not lambda_lo < lambda_hi:
        raise InputError("lambda_lo must be below lambda_hi")
    if L < 1:
        raise InputError("L must be at least 1")
    if range_ is None:
        range_ = candidate_range(series)
    prev, curr = transitions(series, x0)
    candidates = [r for r in _candidates(range_) if _populated(prev, r, R)]
    skipped = [r for r in _candidates(range_) if r not in candidates]
    grid = [lambda_lo + j * (lambda_hi - lambda_lo) / L for j in range(L + 1)]
    table = {}
    best = None
    for j, lam in enumerate(grid):
        gains = {}
        for r in candidates:
            g = dness_gain(prev, curr, r, lam, baseline)
            if g is not None:
                gains[r] = g
        if not gains:
            continue
        r_j = _argbest(gains, maximize=True)
        table[j] = {"lambda": lam, "r_hat": r_j, "gain": gains[r_j], "gains": gains}
        if best is None or gains[r_j] > best[2]:
            best = (j, r_j, gains[r_j])
    if best is None:
        raise InsufficientRegimeDataError("every threshold candidate was skipped")
    j, r_hat, _ = best
    per_candidate = table[j]["gains"]
    fit = cls_fit(series, r_hat, R, x0=x0)
    return ThresholdSearchResult(
        r_hat, per_candidate, fit, "DNess", skipped,
        info={"lambda_grid": grid, "selected_index": j, "per_lambda": table, "baseline": baseline},
    )

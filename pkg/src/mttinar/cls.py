"""Conditional least squares for the autoregressive parameters at a known threshold."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SingularDesignError, SingularInformationError
from .series import regime_split, transitions

COND_LIMIT = 1e12


@dataclass
class MeanFit:
    """Estimates of ``(phi1, phi2, lam)`` at threshold ``r``.

    ``covariance`` is the asymptotic covariance of ``sqrt(m) * (theta_hat - theta)``
    where ``m`` is the number of transitions used, so standard errors are
    ``sqrt(diag(covariance) / m)``.
    """

    phi1: float
    phi2: float
    lam: float
    r: int
    R: int
    n_lower: int
    n_upper: int
    method: str
    covariance: Optional[np.ndarray] = None
    hessian_covariance: Optional[np.ndarray] = None
    loglik: Optional[float] = None
    converged: bool = True
    info: dict = field(default_factory=dict)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.lam])

    @property
    def n_transitions(self) -> int:
        return self.n_lower + self.n_upper

    @property
    def valid(self) -> bool:
        """True when the estimates lie inside (0,1) x (0,1) x (0, inf)."""
        return 0 < self.phi1 < 1 and 0 < self.phi2 < 1 and self.lam > 0

    @property
    def std_errors(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None) / self.n_transitions)

    @property
    def hessian_std_errors(self) -> Optional[np.ndarray]:
        if self.hessian_covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.hessian_covariance), 0, None) / self.n_transitions)


def _sums(prev, curr, low):
    up = ~low
    xp = prev.astype(float)
    xc = curr.astype(float)
    return dict(
        s1x=xp[low].sum(), s2x=xp[up].sum(),
        s1xx=(xp[low] ** 2).sum(), s2xx=(xp[up] ** 2).sum(),
        m1=(xc[low] * xp[low]).sum(), m2=(xc[up] * xp[up]).sum(), m3=xc.sum(),
        n=float(xp.size),
    )


def cls_fit(series, r, R=0, x0=None, with_covariance=True) -> MeanFit:
    """Closed-form CLS estimates at threshold ``r``.

    Estimates are reported as computed, without projecting onto the parameter
    space; check ``MeanFit.valid`` before using them as model parameters.
    """
    prev, curr = transitions(series, x0)
    low = regime_split(prev, r, R)
    s = _sums(prev, curr, low)
    n = s["n"]
    den = n * s["s1xx"] * s["s2xx"] - s["s1x"] ** 2 * s["s2xx"] - s["s2x"] ** 2 * s["s1xx"]
    if den == 0 or not np.isfinite(den):
        raise SingularDesignError(f"CLS normal equations are singular at r={r}")
    phi1 = (
        (n * s["s2xx"] - s["s2x"] ** 2) * s["m1"]
        + s["s1x"] * (s["s2x"] * s["m2"] - s["s2xx"] * s["m3"])
    ) / den
    phi2 = (
        (n * s["s1xx"] - s["s1x"] ** 2) * s["m2"]
        + s["s2x"] * (s["s1x"] * s["m1"] - s["s1xx"] * s["m3"])
    ) / den
    lam = (
        s["s1xx"] * (s["s2xx"] * s["m3"] - s["s2x"] * s["m2"]) - s["s1x"] * s["s2xx"] * s["m1"]
    ) / den
    fit = MeanFit(
        phi1=float(phi1), phi2=float(phi2), lam=float(lam), r=int(r), R=int(R),
        n_lower=int(low.sum()), n_upper=int((~low).sum()), method="CLS",
    )
    if with_covariance:
        fit.covariance = cls_covariance(series, r, R, fit, x0=x0)
    return fit


def mean_residuals(prev, curr, low, phi1, phi2, lam):
    return curr - np.where(low, phi1, phi2) * prev - lam


def cls_design_matrices(series, r, R, fit, x0=None):
    """Return the averaged outer-product matrices ``(V, W)`` of the CLS sandwich."""
    prev, curr = transitions(series, x0)
    low = regime_split(prev, r, R)
    xp = prev.astype(float)
    u = mean_residuals(xp, curr, low, fit.phi1, fit.phi2, fit.lam)
    grad = np.column_stack([xp * low, xp * ~low, np.ones_like(xp)])
    n = xp.size
    V = grad.T @ grad / n
    W = (grad * (u**2)[:, None]).T @ grad / n
    return V, W


def cls_covariance(series, r, R, fit, x0=None) -> np.ndarray:
    """Sandwich ``V^-1 W V^-1`` evaluated at the CLS residuals."""
    V, W = cls_design_matrices(series, r, R, fit, x0=x0)
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > COND_LIMIT:
        raise SingularInformationError(f"CLS information matrix is singular at r={r}")
    Vinv = np.linalg.inv(V)
    cov = Vinv @ W @ Vinv
    return (cov + cov.T) / 2

"""Conditional maximum likelihood with the exact convolution transition law."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaln, logit, logsumexp

from .cls import MeanFit, cls_fit
from .errors import ConvergenceError, DomainError, MTTINARError
from .model import ModelSpec, _check_lambda, _check_phi
from .series import regime_split, transitions

ZERO_PROB_PENALTY = -1e10
MAX_EVALUATIONS = 10_000
BOUNDARY_GAP = 1e-3


@dataclass
class LikelihoodEval:
    loglik: float
    per_observation: np.ndarray
    flagged: bool = False
    gradient: Optional[np.ndarray] = None


class TransitionTerms:
    """Parameter-free pieces of the log transition probabilities of one series.

    Identical ``(x_{t-1}, x_t)`` pairs share one evaluation; ``inverse`` maps the
    unique pairs back onto the observation order.
    """

    def __init__(self, prev, curr, low):
        pairs = np.column_stack([prev, curr, low.astype(np.int64)])
        uniq, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        self.inverse = inverse.ravel()
        self.counts = counts.astype(float)
        i, j, lo = uniq[:, 0], uniq[:, 1], uniq[:, 2].astype(bool)
        self.low = lo
        self._b = self._binomial_terms(i[lo], j[lo])
        self._n = self._negbin_terms(i[~lo], j[~lo])

    @staticmethod
    def _binomial_terms(i, j):
        width = int(np.max(np.minimum(i, j), initial=0)) + 1
        m = np.arange(width)[None, :]
        ib, jb = i[:, None], j[:, None]
        valid = m <= np.minimum(ib, jb)
        mm = np.where(valid, m, 0)
        const = (
            gammaln(ib + 1.0) - gammaln(mm + 1.0) - gammaln(ib - mm + 1.0) - gammaln(jb - mm + 1.0)
        )
        const = np.where(valid, const, -np.inf)
        return const, mm.astype(float), (ib - mm).astype(float), (jb - mm).astype(float)

    @staticmethod
    def _negbin_terms(i, j):
        width = int(np.max(j, initial=0)) + 1
        m = np.arange(width)[None, :]
        ib, jb = i[:, None], j[:, None]
        valid = m <= jb
        mm = np.where(valid, m, 0)
        ipos = np.maximum(ib, 1)
        const = np.where(
            ib > 0,
            gammaln(ipos + mm) - gammaln(ipos) - gammaln(mm + 1.0),
            np.where(mm == 0, 0.0, -np.inf),
        )
        const = np.where(valid, const, -np.inf)
        return const, mm.astype(float), (ib + mm).astype(float), (jb - mm).astype(float)

    def unique_logp(self, phi1, phi2, lam):
        out = np.empty(self.low.size)
        llam, l1lam = math.log(lam), math.log1p(lam)
        c, a, b, d = self._b
        if c.size:
            terms = c + a * math.log(phi1) + b * math.log1p(-phi1) + d * llam - lam
            out[self.low] = logsumexp(terms, axis=1)
        c, a, b, d = self._n
        if c.size:
            terms = c + a * math.log(phi2) - b * math.log1p(phi2) + d * llam - (d + 1) * l1lam
            out[~self.low] = logsumexp(terms, axis=1)
        return np.minimum(out, 0.0)

    def loglik(self, phi1, phi2, lam):
        lp = self.unique_logp(phi1, phi2, lam)
        lp = np.where(np.isfinite(lp), lp, ZERO_PROB_PENALTY)
        return float(self.counts @ lp)


def _terms(series, r, R, x0=None, minimum=0):
    prev, curr = transitions(series, x0)
    low = regime_split(prev, r, R, minimum=minimum)
    return TransitionTerms(prev, curr, low), low


def conditional_log_likelihood(series, phi1, phi2, lam, r, R=0, x0=None) -> LikelihoodEval:
    """Sum over transitions of ``log P(x_t | x_{t-1})``."""
    _check_phi(phi1, "phi1")
    _check_phi(phi2, "phi2")
    _check_lambda(lam)
    terms, _ = _terms(series, r, R, x0)
    per = terms.unique_logp(phi1, phi2, lam)[terms.inverse]
    flagged = bool(np.any(~np.isfinite(per)))
    return LikelihoodEval(loglik=float(per.sum()), per_observation=per, flagged=flagged)


# --------------------------------------------------------------------------
# Optimization on the unconstrained scale (logit phi1, logit phi2, log lambda)
# --------------------------------------------------------------------------


def to_unconstrained(theta):
    phi1, phi2, lam = theta
    return np.array([logit(phi1), logit(phi2), math.log(lam)])


def from_unconstrained(eta):
    return np.array([expit(eta[0]), expit(eta[1]), math.exp(eta[2])])


def _steps(eta):
    return np.maximum(1e-5, 1e-5 * np.abs(eta))


def numerical_gradient(f, x, h=None):
    h = _steps(x) if h is None else h
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h[k]
        g[k] = (f(x + e) - f(x - e)) / (2 * h[k])
    return g


def numerical_hessian(f, x, h=None):
    """Central-difference Hessian of a scalar function."""
    h = _steps(x) if h is None else h
    k = x.size
    H = np.empty((k, k))
    f0 = f(x)
    for a in range(k):
        ea = np.zeros(k)
        ea[a] = h[a]
        H[a, a] = (f(x + ea) - 2 * f0 + f(x - ea)) / h[a] ** 2
        for b in range(a + 1, k):
            eb = np.zeros(k)
            eb[b] = h[b]
            H[a, b] = H[b, a] = (
                f(x + ea + eb) - f(x + ea - eb) - f(x - ea + eb) + f(x - ea - eb)
            ) / (4 * h[a] * h[b])
    return H


class _Objective:
    """Average negative log-likelihood on the unconstrained scale, counting calls."""

    def __init__(self, terms, m, cap=MAX_EVALUATIONS):
        self.terms = terms
        self.m = m
        self.calls = 0
        self.cap = cap
        self.best = (np.inf, None)

    def __call__(self, eta):
        self.calls += 1
        if self.calls > self.cap:
            raise _CapReached()
        if not np.all(np.isfinite(eta)) or np.any(np.abs(eta) > 700):
            return 1e10
        theta = from_unconstrained(eta)
        if not (0 < theta[0] < 1 and 0 < theta[1] < 1 and theta[2] > 0):
            return 1e10
        val = -self.terms.loglik(*theta) / self.m
        if val < self.best[0]:
            self.best = (val, np.array(eta, dtype=float))
        return val

    def grad(self, eta):
        return numerical_gradient(self, eta)


class _CapReached(Exception):
    pass


def _init_point(fit):
    phi1 = min(max(fit.phi1, 0.01), 0.99)
    phi2 = min(max(fit.phi2, 0.01), 0.99)
    lam = max(fit.lam, 0.01)
    return to_unconstrained((phi1, phi2, lam))


def _ascend(obj, eta0):
    """BFGS followed by Newton polishing until the step and objective settle."""
    res = minimize(obj, eta0, jac=obj.grad, method="BFGS", options={"gtol": 1e-9, "maxiter": 500})
    eta = np.asarray(res.x, dtype=float)
    f = obj(eta)
    for _ in range(50):
        g = obj.grad(eta)
        H = numerical_hessian(obj, eta)
        try:
            w = np.linalg.eigvalsh(H)
            step = -np.linalg.solve(H, g) if w.min() > 0 else -g
        except np.linalg.LinAlgError:
            step = -g
        t = 1.0
        while t > 1e-10:
            cand = eta + t * step
            fc = obj(cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            return eta, f, True
        delta = np.max(np.abs(cand - eta))
        df = abs(fc - f) * obj.m
        eta, f = cand, fc
        if delta < 1e-8 and df < 1e-10:
            return eta, f, True
    return eta, f, False


def _near_boundary(theta):
    return (
        min(theta[0], 1 - theta[0], theta[1], 1 - theta[1]) < BOUNDARY_GAP or theta[2] < BOUNDARY_GAP
    )


def cml_fit(series, r, R=0, init: Optional[MeanFit] = None, x0=None, with_covariance=True) -> MeanFit:
    """Maximize the conditional log-likelihood starting from the CLS estimates.

    When the first ascent ends near the edge of the parameter box, four
    deterministic jittered restarts are tried and the best is kept.
    """
    terms, low = _terms(series, r, R, x0, minimum=2)
    m = low.size
    if init is None:
        init = cls_fit(series, r, R, x0=x0, with_covariance=False)
    obj = _Objective(terms, m)
    eta0 = _init_point(init)
    try:
        eta, f, ok = _ascend(obj, eta0)
        if _near_boundary(from_unconstrained(eta)):
            jitter = np.random.default_rng(0).normal(scale=1.0, size=(4, 3))
            for shift in jitter:
                e2, f2, ok2 = _ascend(obj, eta0 + shift)
                if f2 < f:
                    eta, f, ok = e2, f2, ok2
    except _CapReached:
        val, best = obj.best
        theta = from_unconstrained(best) if best is not None else None
        raise ConvergenceError(
            f"CML did not converge within {MAX_EVALUATIONS} evaluations",
            best=theta, loglik=None if best is None else -val * m,
        ) from None
    if not ok:
        raise ConvergenceError(
            "CML Newton polishing did not settle", best=from_unconstrained(eta), loglik=-f * m
        )
    theta = from_unconstrained(eta)
    fit = MeanFit(
        phi1=float(theta[0]), phi2=float(theta[1]), lam=float(theta[2]), r=int(r), R=int(R),
        n_lower=int(low.sum()), n_upper=int((~low).sum()), method="CML",
        loglik=float(terms.loglik(*theta)),
        info={"evaluations": obj.calls},
    )
    if with_covariance:
        fit.covariance, fit.hessian_covariance = _covariances(terms, m, theta)
    return fit


def _chain_factors(theta):
    phi1, phi2, lam = theta
    d1 = np.array([1 / (phi1 * (1 - phi1)), 1 / (phi2 * (1 - phi2)), 1 / lam])
    d2 = np.array([
        (2 * phi1 - 1) / (phi1 * (1 - phi1)) ** 2,
        (2 * phi2 - 1) / (phi2 * (1 - phi2)) ** 2,
        -1 / lam**2,
    ])
    return d1, d2


def _covariances(terms, m, theta):
    eta = to_unconstrained(theta)
    h = _steps(eta)

    def per_obs(e):
        lp = terms.unique_logp(*from_unconstrained(e))
        return np.where(np.isfinite(lp), lp, ZERO_PROB_PENALTY)

    # per-observation scores on the unconstrained scale, per unique pair
    scores = np.empty((terms.counts.size, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h[k]
        scores[:, k] = (per_obs(eta + e) - per_obs(eta - e)) / (2 * h[k])

    def avg(e):
        return float(terms.counts @ per_obs(e)) / m

    g_eta = (terms.counts @ scores) / m
    H_eta = numerical_hessian(avg, eta, h)
    d1, d2 = _chain_factors(theta)
    scores_theta = scores * d1
    I = (scores_theta * terms.counts[:, None]).T @ scores_theta / m
    J = H_eta * np.outer(d1, d1) + np.diag(g_eta * d2)
    J = (J + J.T) / 2
    w = np.linalg.eigvalsh(J)
    if w.max() >= 0:
        warnings.warn("Hessian is not negative definite at the optimum; using a pseudo-inverse")
        Jinv = np.linalg.pinv(J)
    else:
        Jinv = np.linalg.inv(J)
    sandwich = Jinv @ I @ Jinv
    hess_cov = -Jinv
    return (sandwich + sandwich.T) / 2, (hess_cov + hess_cov.T) / 2


def cml_covariance(series, r, R, fit: MeanFit, x0=None):
    """Return ``(sandwich, inverse negative Hessian)`` limit covariances at ``fit``."""
    if not fit.valid:
        raise DomainError("covariance requires estimates inside the parameter space")
    terms, low = _terms(series, r, R, x0, minimum=2)
    return _covariances(terms, low.size, fit.params)


def loglik_at(series, fit_or_theta, r, R=0, x0=None) -> float:
    """Log-likelihood at a parameter triple, ``-inf`` outside the parameter space."""
    theta = fit_or_theta.params if isinstance(fit_or_theta, MeanFit) else fit_or_theta
    try:
        return conditional_log_likelihood(series, *theta, r, R, x0=x0).loglik
    except MTTINARError:
        return -math.inf


def spec_from_fit(fit: MeanFit) -> ModelSpec:
    return ModelSpec(fit.phi1, fit.phi2, fit.lam, fit.r, fit.R)

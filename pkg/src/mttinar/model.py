"""Mixture binomial / negative-binomial thinning threshold INAR(1) process.

Below (or above, when ``R=1``) the threshold ``r`` a step is

    X_t = phi1 o X_{t-1} + Z_1,t      (binomial thinning, Poisson innovation)

and otherwise

    X_t = phi2 * X_{t-1} + Z_2,t      (negative-binomial thinning, geometric innovation)

Both geometric laws live on {0, 1, 2, ...} with ``P(k) = p**k / (1 + p)**(k + 1)``,
so ``phi2 * x`` has mean ``phi2 * x`` and ``Z_2,t`` has mean ``lambda``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .errors import DomainError, TruncationError

__all__ = [
    "RegimeKind",
    "ModelSpec",
    "TheoreticalMoments",
    "make_rng",
    "draw_binomial_thin",
    "draw_nb_thin",
    "draw_innovation",
    "regime_of",
    "regime_mask",
    "simulate",
    "transition_probability",
    "log_transition_probabilities",
    "conditional_moments",
    "truncated_kernel",
    "default_max_state",
    "simulation_max_state",
    "stationary_distribution",
    "theoretical_moments",
]

DEFAULT_BURN_IN = 500
TAIL_TOL = 1e-12


class RegimeKind(enum.Enum):
    BinomialPoisson = 1
    NegBinomialGeometric = 2


@dataclass(frozen=True)
class ModelSpec:
    """Parameters ``(phi1, phi2, lam, r, R)`` of the process.

    ``R=0`` puts the binomial/Poisson pair at or below ``r``; ``R=1`` swaps the
    pairs. Ties ``x_prev == r`` always belong to the "at or below" side.
    """

    phi1: float
    phi2: float
    lam: float
    r: int
    R: int = 0

    def __post_init__(self):
        _check_phi(self.phi1, "phi1")
        _check_phi(self.phi2, "phi2")
        _check_lambda(self.lam)
        if int(self.r) != self.r or self.r < 0:
            raise DomainError(f"threshold r must be a nonnegative integer, got {self.r!r}")
        if self.R not in (0, 1):
            raise DomainError(f"regime order R must be 0 or 1, got {self.R!r}")
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "R", int(self.R))

    @property
    def phi_max(self) -> float:
        return max(self.phi1, self.phi2)

    def with_params(self, phi1, phi2, lam) -> "ModelSpec":
        return ModelSpec(float(phi1), float(phi2), float(lam), self.r, self.R)


def _check_phi(phi, name="phi"):
    if not (0.0 < phi < 1.0) or math.isnan(phi):
        raise DomainError(f"{name} must lie in (0, 1), got {phi!r}")


def _check_lambda(lam):
    if not lam > 0.0 or math.isinf(lam):
        raise DomainError(f"lambda must be positive and finite, got {lam!r}")


def make_rng(seed) -> np.random.Generator:
    """Return the package's random stream for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.uint64(int(seed) % 2**64)))


# --------------------------------------------------------------------------
# Random variates
# --------------------------------------------------------------------------


def draw_binomial_thin(x, phi, rng, size=None):
    """Binomial thinning ``phi o x``: number of survivors among ``x`` Bernoulli trials."""
    _check_phi(phi)
    if x < 0:
        raise DomainError(f"count must be nonnegative, got {x}")
    out = rng.binomial(int(x), phi, size=size)
    return int(out) if size is None else out


def draw_nb_thin(x, phi, rng, size=None):
    """Negative-binomial thinning ``phi * x``: a sum of ``x`` geometric counts with mean ``phi``."""
    _check_phi(phi)
    if x < 0:
        raise DomainError(f"count must be nonnegative, got {x}")
    if x == 0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    # failures before the x-th success with success probability 1/(1+phi)
    out = rng.negative_binomial(int(x), 1.0 / (1.0 + phi), size=size)
    return int(out) if size is None else out


def draw_innovation(kind: RegimeKind, lam, rng, size=None):
    """Poisson(lam) for the binomial regime, geometric with mean ``lam`` otherwise."""
    _check_lambda(lam)
    if kind is RegimeKind.BinomialPoisson:
        out = rng.poisson(lam, size=size)
    else:
        out = rng.geometric(1.0 / (1.0 + lam), size=size) - 1
    return int(out) if size is None else out


def regime_of(spec: ModelSpec, x_prev) -> RegimeKind:
    lower = x_prev <= spec.r
    if lower != bool(spec.R):
        return RegimeKind.BinomialPoisson
    return RegimeKind.NegBinomialGeometric


def regime_mask(x_prev, r, R):
    """Boolean array, True where the binomial/Poisson pair governs the next step."""
    lower = np.asarray(x_prev) <= r
    return lower if R == 0 else ~lower


def simulation_max_state(spec: ModelSpec) -> int:
    return int(math.ceil(8.0 * max(spec.lam, 1.0) / (1.0 - spec.phi_max)))


def simulate(spec: ModelSpec, n, rng, x0=None, burn_in=DEFAULT_BURN_IN) -> np.ndarray:
    """Generate ``n`` observations after discarding ``burn_in`` steps started at ``x0``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if burn_in < 0:
        raise DomainError("burn_in must be nonnegative")
    if x0 is None:
        x0 = int(round(spec.lam / (1.0 - spec.phi_max)))
    total = burn_in + n
    # innovations of both kinds are drawn up front; each step uses the one its regime selects
    pois = rng.poisson(spec.lam, size=total)
    geom = rng.geometric(1.0 / (1.0 + spec.lam), size=total) - 1
    out = np.empty(total, dtype=np.int64)
    binomial = rng.binomial
    negbin = rng.negative_binomial
    phi1, phi2, r = spec.phi1, spec.phi2, spec.r
    p_nb = 1.0 / (1.0 + phi2)
    flip = bool(spec.R)
    x = int(x0)
    for t in range(total):
        if (x <= r) != flip:
            x = binomial(x, phi1) + pois[t]
        else:
            x = (negbin(x, p_nb) if x > 0 else 0) + geom[t]
        out[t] = x
    return out[burn_in:].copy()


# --------------------------------------------------------------------------
# Exact transition law
# --------------------------------------------------------------------------


def _log_p1(i, j, phi, lam):
    """Log of the binomial-thinning / Poisson convolution for arrays ``i``, ``j``."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    width = int(np.max(np.minimum(i, j), initial=0)) + 1
    m = np.arange(width)
    ib, jb = i[..., None], j[..., None]
    valid = m <= np.minimum(ib, jb)
    mm = np.where(valid, m, 0)
    terms = (
        gammaln(ib + 1.0) - gammaln(mm + 1.0) - gammaln(ib - mm + 1.0)
        + mm * math.log(phi) + (ib - mm) * math.log1p(-phi)
        - lam + (jb - mm) * math.log(lam) - gammaln(jb - mm + 1.0)
    )
    terms = np.where(valid, terms, -np.inf)
    return logsumexp(terms, axis=-1)


def _log_p2(i, j, phi, lam):
    """Log of the negative-binomial-thinning / geometric convolution."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    width = int(np.max(j, initial=0)) + 1
    m = np.arange(width)
    ib, jb = i[..., None], j[..., None]
    valid = m <= jb
    mm = np.where(valid, m, 0)
    ipos = np.maximum(ib, 1)
    # thinning of zero is exactly zero: only m = 0 contributes, with weight one
    nb = np.where(
        ib > 0,
        gammaln(ipos + mm) - gammaln(ipos) - gammaln(mm + 1.0)
        + mm * math.log(phi) - (ib + mm) * math.log1p(phi),
        np.where(mm == 0, 0.0, -np.inf),
    )
    geo = (jb - mm) * math.log(lam) - (jb - mm + 1) * math.log1p(lam)
    terms = np.where(valid, nb + geo, -np.inf)
    return logsumexp(terms, axis=-1)


def log_transition_probabilities(spec: ModelSpec, i, j) -> np.ndarray:
    """Elementwise ``log P(X_t = j | X_{t-1} = i)`` for integer arrays."""
    i = np.atleast_1d(np.asarray(i, dtype=np.int64))
    j = np.atleast_1d(np.asarray(j, dtype=np.int64))
    i, j = np.broadcast_arrays(i, j)
    if np.any(i < 0) or np.any(j < 0):
        raise DomainError("states must be nonnegative")
    out = np.empty(i.shape, dtype=float)
    low = regime_mask(i, spec.r, spec.R)
    if low.any():
        out[low] = _log_p1(i[low], j[low], spec.phi1, spec.lam)
    if (~low).any():
        out[~low] = _log_p2(i[~low], j[~low], spec.phi2, spec.lam)
    return np.minimum(out, 0.0)


def transition_probability(spec: ModelSpec, i, j) -> float:
    p = math.exp(float(log_transition_probabilities(spec, i, j)[0]))
    return min(max(p, 0.0), 1.0)


def conditional_moments(spec: ModelSpec, x_prev):
    """Mean and variance of ``X_t`` given ``X_{t-1} = x_prev``."""
    if regime_of(spec, x_prev) is RegimeKind.BinomialPoisson:
        phi = spec.phi1
        return phi * x_prev + spec.lam, phi * (1 - phi) * x_prev + spec.lam
    phi = spec.phi2
    return phi * x_prev + spec.lam, phi * (1 + phi) * x_prev + spec.lam * (1 + spec.lam)


# --------------------------------------------------------------------------
# Truncated kernel and stationary law
# --------------------------------------------------------------------------


def truncated_kernel(spec: ModelSpec, max_state) -> np.ndarray:
    """Unnormalized kernel restricted to states ``0..max_state`` (rows and columns).

    Rows are built as thinning pmf times a Toeplitz matrix of innovation pmfs.
    The component pmfs come from ``scipy.stats``, whose large-count accuracy keeps
    row-mass deficits meaningful down to 1e-12.
    """
    M = int(max_state)
    s = np.arange(M + 1)
    ii, mm = s[:, None], s[None, :]
    lower = regime_mask(s, spec.r, spec.R)

    thin_b = stats.binom.pmf(mm, ii, spec.phi1)
    # sum of i geometrics = failures before the i-th success; row 0 is a point mass
    thin_n = np.where(
        ii > 0, stats.nbinom.pmf(mm, np.maximum(ii, 1), 1.0 / (1.0 + spec.phi2)), (mm == 0) * 1.0
    )
    pois = stats.poisson.pmf(s, spec.lam)
    geo = stats.geom.pmf(s + 1, 1.0 / (1.0 + spec.lam))
    diff = mm - ii
    t_pois = np.where(diff >= 0, pois[np.clip(diff, 0, M)], 0.0)
    t_geo = np.where(diff >= 0, geo[np.clip(diff, 0, M)], 0.0)

    P = np.empty((M + 1, M + 1))
    P[lower] = thin_b[lower] @ t_pois
    P[~lower] = thin_n[~lower] @ t_geo
    return P


def default_max_state(spec: ModelSpec, observed_max=0, tol=TAIL_TOL, limit=4096) -> int:
    """Smallest ``M >= observed_max`` such that every row ``i <= M`` keeps mass >= 1 - tol.

    The search grows geometrically from the simulation default and then bisects.
    """

    def ok(M):
        return np.max(1.0 - truncated_kernel(spec, M).sum(axis=1)) <= tol

    lo = max(int(observed_max), spec.r + 1, 1)
    hi = max(lo, simulation_max_state(spec))
    while not ok(hi):
        if hi >= limit:
            raise TruncationError(f"no max_state <= {limit} keeps row mass within {tol}")
        lo = hi + 1
        hi = min(limit, int(math.ceil(hi * 1.5)))
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi


def stationary_distribution(spec: ModelSpec, max_state=None, tol=TAIL_TOL, max_iter=200_000):
    """Stationary pmf on ``0..max_state`` by power iteration on the renormalized kernel.

    Raises
    ------
    TruncationError
        If some kept row has truncated mass below ``1 - tol``.
    """
    if max_state is None:
        max_state = default_max_state(spec, tol=tol)
    P = truncated_kernel(spec, max_state)
    deficit = 1.0 - P.sum(axis=1)
    if np.max(deficit) > tol:
        raise TruncationError(
            f"rows lose up to {np.max(deficit):.3g} mass at max_state={max_state}; "
            f"use a larger max_state",
            suggested_max_state=int(math.ceil(max_state * 1.5)),
        )
    P = P / P.sum(axis=1, keepdims=True)
    pi = P[0].copy()
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        change = np.abs(nxt - pi).sum()
        pi = nxt
        if change < tol:
            break
    return pi


@dataclass(frozen=True)
class TheoreticalMoments:
    mean: float
    variance: float
    q: float
    mu1: float
    mu2: float
    sigma1_sq: float
    sigma2_sq: float
    acf: tuple
    max_state: int


def theoretical_moments(spec: ModelSpec, max_state=None, max_lag=10) -> TheoreticalMoments:
    """Stationary mean, variance and autocorrelations from the regime-wise moments.

    ``q`` is the stationary probability of the binomial/Poisson regime and
    ``mu1, sigma1_sq`` (``mu2, sigma2_sq``) are the mean and variance of
    ``X_t`` restricted to that regime (to the other one). ``acf[h-1]`` is the
    lag-``h`` autocorrelation.
    """
    if max_state is None:
        max_state = default_max_state(spec)
    pi = stationary_distribution(spec, max_state)
    s = np.arange(max_state + 1, dtype=float)
    low = regime_mask(s.astype(int), spec.r, spec.R)
    q = pi[low].sum()
    mu1 = (pi[low] * s[low]).sum() / q
    mu2 = (pi[~low] * s[~low]).sum() / (1 - q)
    sig1 = (pi[low] * (s[low] - mu1) ** 2).sum() / q
    sig2 = (pi[~low] * (s[~low] - mu2) ** 2).sum() / (1 - q)
    p1, p2 = spec.phi1, spec.phi2
    lam = spec.lam

    mean = q * p1 * mu1 + (1 - q) * p2 * mu2 + lam
    # the last line collects the between-regime covariance of the innovation means
    var = (
        q * (p1**2 * sig1 + p1 * (1 - p1) * mu1)
        + q * (1 - q) * p1**2 * mu1**2
        + q * lam
        + (1 - q) * (p2**2 * sig2 + p2 * (1 + p2) * mu2)
        + q * (1 - q) * p2**2 * mu2**2
        + (1 - q) * lam * (1 + lam)
        - 2 * q * (1 - q) * (p1 * mu1 + lam) * (p2 * mu2 + lam)
        + 2 * q * (1 - q) * lam * (lam + p1 * mu1 + p2 * mu2)
    )

    P = truncated_kernel(spec, max_state)
    P /= P.sum(axis=1, keepdims=True)
    phis = (p1, p2)
    probs = (q, 1 - q)
    masks = (low, ~low)
    mus = (mu1, mu2)
    sigs = (sig1, sig2)
    acf = []
    # gamma_{h-1}^{(s)} = Cov(X_t, X_{t+h-1} | regime s at t+h-1), via P^{h-1}
    g = [np.where(m, s, 0.0) for m in masks]
    for h in range(1, max_lag + 1):
        cov = 0.0
        for k in range(2):
            if h == 1:
                gamma = sigs[k] + mus[k] ** 2 - mus[k] * mean
            else:
                cross = (pi * s) @ g[k]
                gamma = (cross - mean * probs[k] * mus[k]) / probs[k]
            cov += phis[k] * probs[k] * gamma
        acf.append(cov / var)
        g = [P @ gk for gk in g]
    return TheoreticalMoments(
        mean=float(mean), variance=float(var), q=float(q), mu1=float(mu1), mu2=float(mu2),
        sigma1_sq=float(sig1), sigma2_sq=float(sig2), acf=tuple(float(a) for a in acf),
        max_state=int(max_state),
    )

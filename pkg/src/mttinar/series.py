"""Count-series validation and the transition pairs every estimator consumes."""

import numpy as np

from .errors import DomainError, InsufficientRegimeDataError
from .model import regime_mask


def as_series(values) -> np.ndarray:
    """Validate and return a 1-D int64 array of nonnegative counts."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DomainError("a count series must be one-dimensional")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise DomainError("a count series must hold integers")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise DomainError("a count series must be nonnegative")
    return arr


def transitions(series, x0=None):
    """Return ``(prev, curr)`` arrays of consecutive pairs.

    Without ``x0`` the pairs are ``(x[t-1], x[t])`` for ``t = 1..n-1``. With a
    known starting value the pair ``(x0, x[0])`` is prepended, giving ``n`` pairs.
    """
    x = as_series(series)
    if x0 is not None:
        x = np.concatenate([[int(x0)], x])
    if x.size < 2:
        raise InsufficientRegimeDataError("at least two observations are required")
    return x[:-1], x[1:]


def regime_split(prev, r, R, minimum=2):
    """Indicator of the binomial/Poisson regime, checking both regimes are populated."""
    low = regime_mask(prev, r, R)
    n_low = int(low.sum())
    n_up = low.size - n_low
    if n_low < minimum or n_up < minimum:
        raise InsufficientRegimeDataError(
            f"threshold r={r} leaves {n_low} and {n_up} transitions in the two regimes; "
            f"need at least {minimum} each"
        )
    return low

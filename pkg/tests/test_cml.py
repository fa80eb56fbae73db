import math
import warnings

import numpy as np
import pytest

from mttinar.cls import cls_fit
from mttinar.cml import (
    cml_covariance,
    cml_fit,
    conditional_log_likelihood,
    loglik_at,
    numerical_gradient,
    to_unconstrained,
    from_unconstrained,
)
from mttinar.errors import DomainError
from mttinar.model import ModelSpec, make_rng, simulate, transition_probability

from conftest import A1


def direct_p1(i, j, phi, lam):
    return sum(
        math.comb(i, m) * phi**m * (1 - phi) ** (i - m) * math.exp(-lam) * lam ** (j - m) / math.factorial(j - m)
        for m in range(min(i, j) + 1)
    )


def direct_p2(i, j, phi, lam):
    if i == 0:
        return lam**j / (1 + lam) ** (j + 1)
    return sum(
        math.comb(i + m - 1, m) * phi**m / (1 + phi) ** (i + m) * lam ** (j - m) / (1 + lam) ** (j - m + 1)
        for m in range(j + 1)
    )


def test_single_geometric_term():
    ev = conditional_log_likelihood([0, 0], 0.5, 0.5, 3.0, r=0, R=1)
    assert math.isclose(ev.loglik, -1.3862944, abs_tol=1e-7)
    assert math.isclose(ev.loglik, -math.log(4.0), rel_tol=1e-14)


def test_per_observation_matches_kernel(a1_series_200):
    x = a1_series_200
    ev = conditional_log_likelihood(x, 0.35, 0.25, 2.8, 4, 0)
    spec = ModelSpec(0.35, 0.25, 2.8, 4, 0)
    assert ev.per_observation.size == x.size - 1
    assert np.all(ev.per_observation <= 0)
    assert math.isclose(ev.loglik, ev.per_observation.sum(), rel_tol=1e-14)
    for t in range(1, x.size):
        assert abs(math.exp(ev.per_observation[t - 1]) - transition_probability(spec, x[t - 1], x[t])) < 1e-12


def test_matches_direct_arithmetic():
    x = simulate(A1, 100, make_rng(31))
    theta = (0.37, 0.22, 3.1)
    direct = 0.0
    for a, b in zip(x[:-1], x[1:]):
        p = direct_p1(int(a), int(b), theta[0], theta[2]) if a <= 4 else direct_p2(int(a), int(b), theta[1], theta[2])
        direct += math.log(p)
    got = conditional_log_likelihood(x, *theta, 4, 0).loglik
    assert abs(got - direct) < 1e-9


def test_domain_checks():
    with pytest.raises(DomainError):
        conditional_log_likelihood([1, 2, 3], 1.0, 0.2, 3, 1)
    with pytest.raises(DomainError):
        conditional_log_likelihood([1, 2, 3], 0.4, 0.2, -1, 1)


def test_x0_convention_is_consistent(a1_series_200):
    x = a1_series_200
    with_x0 = conditional_log_likelihood(x, 0.4, 0.2, 3, 4, x0=2).loglik
    prepended = conditional_log_likelihood(np.concatenate([[2], x]), 0.4, 0.2, 3, 4).loglik
    assert with_x0 == prepended
    f1 = cml_fit(x, 4, 0, x0=2, with_covariance=False)
    f2 = cml_fit(np.concatenate([[2], x]), 4, 0, with_covariance=False)
    assert np.allclose(f1.params, f2.params, atol=1e-10)


def test_fit_dominates_cls_and_gradient_vanishes(a1_series_800):
    x = a1_series_800
    fit = cml_fit(x, 4, 0)
    cls = cls_fit(x, 4, 0)
    assert fit.method == "CML"
    assert fit.loglik >= loglik_at(x, cls, 4, 0)
    ev = conditional_log_likelihood(x, *fit.params, 4, 0)
    assert math.isclose(fit.loglik, ev.loglik, rel_tol=1e-12)

    def f(eta):
        return conditional_log_likelihood(x, *from_unconstrained(eta), 4, 0).loglik / (x.size - 1)

    assert np.linalg.norm(numerical_gradient(f, to_unconstrained(fit.params))) < 1e-5


def test_random_point_dominance():
    x = simulate(A1, 150, make_rng(150))
    fit = cml_fit(x, 4, 0, with_covariance=False)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0.01, 0.99, 1000), rng.uniform(0.01, 0.99, 1000), rng.uniform(0.05, 10, 1000)])
    best = max(conditional_log_likelihood(x, *p, 4, 0).loglik for p in pts)
    assert fit.loglik >= best


def test_covariance_outputs(a1_series_800):
    fit = cml_fit(a1_series_800, 4, 0)
    for cov in (fit.covariance, fit.hessian_covariance):
        assert np.max(np.abs(cov - cov.T)) < 1e-10
        assert np.all(np.diag(cov) > 0)
    sand, hess = cml_covariance(a1_series_800, 4, 0, fit)
    assert np.allclose(sand, fit.covariance)
    # under correct specification the two agree up to sampling noise
    assert np.allclose(np.diag(sand), np.diag(hess), rtol=0.5)


def test_deterministic(a1_series_200):
    a = cml_fit(a1_series_200, 4, 0)
    b = cml_fit(a1_series_200, 4, 0)
    assert np.array_equal(a.params, b.params)


@pytest.mark.slow
def test_se_matches_sampling_spread():
    rng = make_rng(4242)
    est, ses = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(2000):
            x = simulate(A1, 2000, rng)
            fit = cml_fit(x, 4, 0)
            est.append(fit.phi1)
            ses.append(fit.std_errors[0])
    sd = np.std(est, ddof=1)
    assert abs(np.mean(ses) / sd - 1) < 0.15

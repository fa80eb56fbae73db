import numpy as np
import pytest

from mttinar.cls import cls_fit
from mttinar.cml import _init_point, from_unconstrained, loglik_at
from mttinar.errors import InputError, InsufficientRegimeDataError
from mttinar.model import make_rng, simulate
from mttinar.series import transitions
from mttinar.threshold import (
    _argbest,
    _one_regime_sse,
    _profiled_sse,
    candidate_range,
    dness_gain,
    dness_search,
    search_r_cls_var,
    search_r_cml,
    split_sse,
    variance_score,
)

from conftest import A1


def test_candidate_range_examples():
    assert candidate_range(np.arange(100)) == (9, 89)
    assert candidate_range(np.full(30, 6)) == (6, 6)
    with pytest.raises(InputError):
        candidate_range(np.arange(9))
    with pytest.raises(InputError):
        candidate_range(np.arange(20), 0.9, 0.1)


def test_candidate_range_type1_rule():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.integers(0, 40, size=rng.integers(10, 200))
        lo, hi = candidate_range(x, 0.1, 0.9)
        s = np.sort(x)
        ecdf = lambda v: np.mean(x <= v)
        assert ecdf(lo) >= 0.1 and (lo == s[0] or ecdf(lo - 1) < 0.1)
        assert ecdf(hi) >= 0.9 and (hi == s[0] or ecdf(hi - 1) < 0.9)


def test_tie_breaking_prefers_smallest():
    assert _argbest({3: 1.0, 4: 2.0, 5: 2.0}, maximize=True) == 4
    assert _argbest({3: 1.0, 4: 1.0, 5: 2.0}, maximize=False) == 3


def test_cml_search_bookkeeping(a1_series_200):
    x = a1_series_200
    lo, hi = candidate_range(x)
    res = search_r_cml(x, 0)
    assert res.method == "CMLGrid"
    assert lo <= res.r_hat <= hi
    assert set(res.per_candidate) | set(res.skipped) == set(range(lo, hi + 1))
    assert res.per_candidate[res.r_hat] == max(res.per_candidate.values())
    assert res.fit_at_r_hat.r == res.r_hat


def test_cml_search_dominates_cls_start(a1_series_200):
    x = a1_series_200
    res = search_r_cml(x, 0)
    for r, ll in res.per_candidate.items():
        start = from_unconstrained(_init_point(cls_fit(x, r, 0, with_covariance=False)))
        assert ll >= loglik_at(x, start, r, 0) - 1e-9


def test_searches_are_reproducible(a1_series_200):
    x = a1_series_200
    for fn in (search_r_cml, search_r_cls_var, dness_search):
        a, b = fn(x, 0), fn(x, 0)
        assert a.r_hat == b.r_hat
        assert a.per_candidate == b.per_candidate


def test_all_candidates_skipped():
    x = np.array([1] * 20 + [2])
    with pytest.raises(InsufficientRegimeDataError):
        search_r_cml(x, 0, range_=(5, 6))


def test_variance_search_argmin_and_range(a1_series_200):
    x = a1_series_200
    res = search_r_cls_var(x, 0)
    assert res.method == "VarianceCLS"
    assert res.per_candidate[res.r_hat] == min(res.per_candidate.values())
    # the second step is the plain CLS fit at the selected threshold
    assert np.allclose(res.fit_at_r_hat.params, cls_fit(x, res.r_hat, 0).params)
    edge = search_r_cls_var(x, 0, range_=(4, 5))
    assert edge.r_hat in (4, 5)


def test_variance_score_minimizer_beats_cls_start(a1_series_200):
    x = a1_series_200
    prev, curr = transitions(x)
    res = search_r_cls_var(x, 0)
    low = prev <= 4
    theta = res.info["score_minimizer"][4]
    start = cls_fit(x, 4, 0, with_covariance=False).params
    assert variance_score(theta, prev, curr, low) <= variance_score(start, prev, curr, low) + 1e-9


def test_split_sse_never_exceeds_one_regime():
    # two clearly different slopes on either side of 5
    rng = np.random.default_rng(3)
    xp = rng.integers(0, 12, size=400)
    xc = np.where(xp <= 5, 0.8 * xp, 0.1 * xp) + 2 + rng.normal(0, 0.3, size=400)
    for lam in (1.0, 2.0, 3.0):
        one = _profiled_sse(xc, xp.astype(float), lam)
        for r in range(1, 10):
            assert split_sse(xp, xc, r, lam) <= one + 1e-9
    assert dness_gain(xp, xc, 5, 2.0, baseline="profiled") > dness_gain(xp, xc, 9, 2.0, baseline="profiled")


def test_dness_structure(a1_series_800):
    res = dness_search(a1_series_800, 0, 2, 6, 4)
    assert res.method == "DNess"
    assert res.info["lambda_grid"] == [2.0, 3.0, 4.0, 5.0, 6.0]
    table = res.info["per_lambda"]
    j = res.info["selected_index"]
    assert table[j]["r_hat"] == res.r_hat
    assert table[j]["gain"] == max(t["gain"] for t in table.values())
    for t in table.values():
        assert t["gain"] == max(t["gains"].values())


def test_dness_baselines_agree_within_lambda(a1_series_800):
    x = a1_series_800
    a = dness_search(x, 0, baseline="free").info["per_lambda"]
    b = dness_search(x, 0, baseline="profiled").info["per_lambda"]
    for j in a:
        assert a[j]["r_hat"] == b[j]["r_hat"]
    with pytest.raises(InputError):
        dness_search(x, 0, 6, 2)
    with pytest.raises(InputError):
        dness_search(x, 0, L=0)


def test_one_regime_sse_matches_lstsq():
    rng = np.random.default_rng(0)
    xp = rng.integers(0, 10, 50).astype(float)
    xc = 0.3 * xp + 2 + rng.normal(size=50)
    A = np.column_stack([xp, np.ones(50)])
    _, res, *_ = np.linalg.lstsq(A, xc, rcond=None)
    assert np.isclose(_one_regime_sse(xc, xp), res[0])


@pytest.mark.slow
def test_cp_at_1500_near_published_for_fast_methods():
    rng = make_rng(1500)
    hits = {"dness": 0, "clsvar": 0}
    reps = 200
    for _ in range(reps):
        x = simulate(A1, 1500, rng)
        hits["dness"] += dness_search(x, 0).r_hat == 4
        hits["clsvar"] += search_r_cls_var(x, 0).r_hat == 4
    assert abs(hits["dness"] / reps - 0.9362) <= 0.1
    assert abs(hits["clsvar"] / reps - 0.9196) <= 0.1

import json
import warnings

import numpy as np
import pytest

from mttinar.errors import InputError
from mttinar.study import (
    MODELS,
    StudyConfig,
    aggregate,
    is_null_model,
    replication_seed,
    rerun_cell,
    run_study,
)


def _cfg(tmp_path, tag, **kw):
    base = dict(models=["A1", "I-P2"], sample_sizes=[120], replications=6,
                estimators=["cls", "cml"], threshold_methods=["cml"], tests=["wald_e", "wald_var"],
                seed=17, out_dir=str(tmp_path / tag))
    base.update(kw)
    return StudyConfig(**base)


def test_replication_seeds_are_stable_and_distinct():
    s = replication_seed(0, 1, 2, 3)
    assert s == replication_seed(0, 1, 2, 3)
    keys = {replication_seed(0, m, n, k) for m in range(3) for n in range(3) for k in range(50)}
    assert len(keys) == 450
    assert 0 <= s < 2**64


def test_null_models():
    assert is_null_model(MODELS["I-P2"]) and is_null_model(MODELS["I-G1"])
    assert not is_null_model(MODELS["A1"]) and not is_null_model(MODELS["B-M2"])


@pytest.mark.parametrize("bad", [
    dict(replications=0),
    dict(models=["Z9"]),
    dict(sample_sizes=[10]),
    dict(estimators=["mle"]),
    dict(tests=["lr"]),
])
def test_config_validation(tmp_path, bad):
    with pytest.raises(InputError):
        _cfg(tmp_path, "x", **bad)


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_tables_identical_across_runs_and_workers(tmp_path):
    run_study(_cfg(tmp_path, "a"))
    run_study(_cfg(tmp_path, "b"))
    run_study(_cfg(tmp_path, "c", workers=2))
    for name in ("estimators.tsv", "thresholds.tsv", "tests.tsv", "manifest.json"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes(), name
        assert a == (tmp_path / "c" / name).read_bytes(), name
    assert (tmp_path / "a" / "timings.tsv").exists()


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_rerun_cell_reproduces(tmp_path):
    out = run_study(_cfg(tmp_path, "r"))
    manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert rerun_cell(manifest, "A1", 120) == out.results[("A1", 120)]
    assert rerun_cell(manifest, "I-P2", 120, rep=4) == [out.results[("I-P2", 120)][4]]


def test_table_contents(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = run_study(_cfg(tmp_path, "t"), write=False)
    est = out.tables["estimators"]
    assert {row[0] for row in est.rows} == {"A1"}  # null models have no parameters to estimate
    assert len(est.rows) == 2 * 3
    row = est.rows[0]
    vals = np.array([r["est:cls:phi1"] for r in out.results[("A1", 120)]])
    assert row[4] == vals.mean() and row[5] == vals.mean() - MODELS["A1"].phi1
    tests = {(r[0], r[2]): r[3] for r in out.tables["tests"].rows}
    assert set(tests) == {("A1", "wald_e"), ("A1", "wald_var"), ("I-P2", "wald_e"), ("I-P2", "wald_var")}
    assert all(0 <= v <= 1 for v in tests.values())


def test_low_replication_warning(tmp_path):
    with pytest.warns(UserWarning, match="replication"):
        run_study(_cfg(tmp_path, "w", replications=1, models=["A1"], threshold_methods=[], tests=[]),
                  write=False)


def test_failures_are_counted_and_flagged(tmp_path):
    cfg = _cfg(tmp_path, "f", models=["A1"], threshold_methods=[], tests=["wald_e"], replications=50)
    good = {"est:cls:phi1": 0.6, "est:cls:phi2": 0.2, "est:cls:lam": 3.0,
            "est:cml:phi1": 0.6, "est:cml:phi2": 0.2, "est:cml:lam": 3.0, "test:wald_e": False}
    bad = {"est:cls:error": "SingularDesignError", "est:cml:phi1": 0.6, "est:cml:phi2": 0.2,
           "est:cml:lam": 3.0, "test:wald_e:error": "SingularInformationError"}
    tables = aggregate(cfg, {("A1", 120): [good] * 49 + [bad]})
    by = {(r[2], r[3]): r for r in tables["estimators"].rows}
    assert by[("CLS", "phi1")][7:] == [49, 1, "FLAG"]
    assert by[("CML", "phi1")][7:] == [50, 0, "ok"]
    assert tables["tests"].rows[0][4:] == [49, 1, "FLAG"]

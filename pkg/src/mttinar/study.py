"""Monte-Carlo study harness: simulate, estimate, search thresholds, run tests, aggregate.

Every replication draws from its own generator seeded by hashing
``(master seed, model index, sample-size index, replication index)`` to 64 bits,
so any cell can be regenerated alone and results do not depend on worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .cls import cls_fit
from .cml import cml_fit
from .errors import InputError, MTTINARError
from .hypothesis import wald_mean_test, wald_variance_test
from .model import ModelSpec, make_rng, simulate
from .threshold import candidate_range, dness_search, search_r_cls_var, search_r_cml

log = logging.getLogger(__name__)

# one-regime null models are encoded with an unreachable threshold
NO_THRESHOLD = 10**9

MODELS = {
    "A1": ModelSpec(0.4, 0.2, 3.0, 4, 0),
    "A2": ModelSpec(0.4, 0.4, 3.0, 4, 0),
    "A3": ModelSpec(0.3, 0.6, 5.0, 7, 0),
    "A4": ModelSpec(0.6, 0.6, 5.0, 12, 0),
    "B1": ModelSpec(0.4, 0.2, 3.0, 4, 1),
    "B2": ModelSpec(0.4, 0.4, 3.0, 4, 1),
    "B3": ModelSpec(0.3, 0.6, 5.0, 7, 1),
    "B4": ModelSpec(0.6, 0.6, 5.0, 12, 1),
    # INAR(1) with binomial thinning and Poisson innovations
    "I-P1": ModelSpec(0.2, 0.2, 6.0, NO_THRESHOLD, 0),
    "I-P2": ModelSpec(0.4, 0.4, 5.0, NO_THRESHOLD, 0),
    "I-P3": ModelSpec(0.5, 0.5, 5.0, NO_THRESHOLD, 0),
    # INAR(1) with negative-binomial thinning and geometric innovations
    "I-G1": ModelSpec(0.4, 0.4, 5.0, NO_THRESHOLD, 1),
    "I-G2": ModelSpec(0.5, 0.5, 4.0, NO_THRESHOLD, 1),
    "I-G3": ModelSpec(0.6, 0.6, 5.0, NO_THRESHOLD, 1),
    "B-M1": ModelSpec(0.4, 0.2, 6.0, 6, 0),
    "B-M2": ModelSpec(0.4, 0.4, 6.0, 6, 0),
    "B-M3": ModelSpec(0.3, 0.6, 5.0, 7, 0),
    "B-M4": ModelSpec(0.4, 0.2, 6.0, 6, 1),
    "B-M5": ModelSpec(0.4, 0.4, 6.0, 6, 1),
    "B-M6": ModelSpec(0.3, 0.6, 5.0, 7, 1),
}

ESTIMATORS = ("cls", "cml")
THRESHOLD_METHODS = ("cml", "clsvar", "dness")
TESTS = ("wald_e", "wald_var")
PARAMS = ("phi1", "phi2", "lam")
FULL_REPLICATIONS = 10_000
LOW_REPLICATION_WARNING = 30
FAILURE_FLAG_RATE = 0.01


def is_null_model(spec: ModelSpec) -> bool:
    return spec.r >= NO_THRESHOLD


@dataclass
class StudyConfig:
    models: list
    sample_sizes: list
    replications: int = 500
    estimators: list = field(default_factory=lambda: ["cls", "cml"])
    threshold_methods: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    seed: int = 0
    out_dir: str = "study_out"
    workers: int = 1
    dness_grid: tuple = (2.0, 6.0, 4)
    var_form: str = "sum"

    def __post_init__(self):
        if int(self.replications) < 1:
            raise InputError("replication count must be at least 1")
        for m in self.models:
            if m not in MODELS:
                raise InputError(f"unknown model {m!r}; choose from {sorted(MODELS)}")
        for n in self.sample_sizes:
            if int(n) < 20:
                raise InputError("sample sizes below 20 cannot support a threshold range")
        for what, allowed, chosen in (
            ("estimator", ESTIMATORS, self.estimators),
            ("threshold method", THRESHOLD_METHODS, self.threshold_methods),
            ("test", TESTS, self.tests),
        ):
            bad = set(chosen) - set(allowed)
            if bad:
                raise InputError(f"unknown {what}(s) {sorted(bad)}")


def replication_seed(seed, model_idx, n_idx, rep) -> int:
    key = f"{int(seed)}:{int(model_idx)}:{int(n_idx)}:{int(rep)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def _test_threshold(spec, x):
    if is_null_model(spec):
        lo, hi = candidate_range(x)
        return (lo + hi) // 2, 0
    return spec.r, spec.R


def run_replication(task):
    """One replication. ``task`` is ``(config_dict, model_name, n, seed)``; returns a flat dict."""
    cfg, name, n, seed = task
    spec = MODELS[name]
    x = simulate(spec, n, make_rng(seed))
    out = {}
    null = is_null_model(spec)

    def attempt(key, fn):
        try:
            fn()
        except (MTTINARError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out[f"{key}:error"] = type(exc).__name__

    if not null:
        for est in cfg["estimators"]:
            def go(est=est):
                fit = (cls_fit if est == "cls" else cml_fit)(x, spec.r, spec.R, with_covariance=False)
                for p, v in zip(PARAMS, fit.params):
                    out[f"est:{est}:{p}"] = float(v)
            attempt(f"est:{est}", go)

        for meth in cfg["threshold_methods"]:
            def go(meth=meth):
                if meth == "cml":
                    res = search_r_cml(x, spec.R)
                elif meth == "clsvar":
                    res = search_r_cls_var(x, spec.R)
                else:
                    lo, hi, L = cfg["dness_grid"]
                    res = dness_search(x, spec.R, lo, hi, int(L))
                out[f"thr:{meth}:r"] = int(res.r_hat)
                for p, v in zip(PARAMS, res.fit_at_r_hat.params):
                    out[f"thr:{meth}:{p}"] = float(v)
            attempt(f"thr:{meth}", go)

    if cfg["tests"]:
        r, R = _test_threshold(spec, x)
        for test in cfg["tests"]:
            def go(test=test):
                if test == "wald_e":
                    res = wald_mean_test(x, r, R)
                else:
                    res = wald_variance_test(x, r, R, form=cfg["var_form"])
                out[f"test:{test}"] = bool(res.reject_at_05)
            attempt(f"test:{test}", go)
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list

    def to_tsv(self) -> str:
        lines = ["\t".join(self.columns)]
        lines += ["\t".join(_fmt(v) if not isinstance(v, str) else v for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _cell_status(fails, reps):
    rate = fails / reps
    return "FLAG" if rate > FAILURE_FLAG_RATE else "ok"


def aggregate(cfg: StudyConfig, results: dict) -> dict:
    """Build result tables from ``results[(model, n)] = [replication dicts]``."""
    est_rows, thr_rows, test_rows = [], [], []
    for name in cfg.models:
        spec = MODELS[name]
        truth = dict(zip(PARAMS, (spec.phi1, spec.phi2, spec.lam)))
        for n in cfg.sample_sizes:
            reps = results[(name, n)]
            total = len(reps)
            if not is_null_model(spec):
                for est in cfg.estimators:
                    ok = [r for r in reps if f"est:{est}:error" not in r]
                    fails = total - len(ok)
                    for p in PARAMS:
                        vals = np.array([r[f"est:{est}:{p}"] for r in ok], dtype=float)
                        est_rows.append(_moment_row(name, n, est.upper(), p, vals, truth[p], fails, total))
                for meth in cfg.threshold_methods:
                    ok = [r for r in reps if f"thr:{meth}:error" not in r]
                    fails = total - len(ok)
                    rh = np.array([r[f"thr:{meth}:r"] for r in ok], dtype=float)
                    mean_r = rh.mean() if rh.size else float("nan")
                    cp = (rh == spec.r).mean() if rh.size else float("nan")
                    thr_rows.append([name, n, meth, "r", mean_r, mean_r - spec.r,
                                     ((rh - spec.r) ** 2).mean() if rh.size else float("nan"),
                                     cp, len(ok), fails, _cell_status(fails, total)])
                    for p in PARAMS:
                        vals = np.array([r[f"thr:{meth}:{p}"] for r in ok], dtype=float)
                        row = _moment_row(name, n, meth, p, vals, truth[p], fails, total)
                        thr_rows.append(row[:7] + [float("nan")] + row[7:])
            for test in cfg.tests:
                ok = [r for r in reps if f"test:{test}:error" not in r]
                fails = total - len(ok)
                rate = np.mean([r[f"test:{test}"] for r in ok]) if ok else float("nan")
                test_rows.append([name, n, test, rate, len(ok), fails, _cell_status(fails, total)])
    tables = {}
    if est_rows:
        tables["estimators"] = ResultTable(
            "estimators",
            ["model", "n", "method", "parameter", "mean", "bias", "mse", "n_ok", "n_failed", "status"],
            est_rows,
        )
    if thr_rows:
        tables["thresholds"] = ResultTable(
            "thresholds",
            ["model", "n", "method", "parameter", "mean", "bias", "mse", "cp_r", "n_ok", "n_failed", "status"],
            thr_rows,
        )
    if test_rows:
        tables["tests"] = ResultTable(
            "tests", ["model", "n", "test", "rejection_rate", "n_ok", "n_failed", "status"], test_rows
        )
    return tables


def _moment_row(name, n, method, p, vals, truth, fails, total):
    if vals.size:
        mean = vals.mean()
        bias = mean - truth
        mse = ((vals - truth) ** 2).mean()
    else:
        mean = bias = mse = float("nan")
    return [name, n, method, p, mean, bias, mse, int(vals.size), fails, _cell_status(fails, total)]


@dataclass
class StudyOutput:
    tables: dict
    results: dict
    manifest: dict
    timings: dict


def run_study(cfg: StudyConfig, write=True) -> StudyOutput:
    """Run every (model, n, replication) cell and optionally write tables, manifest and timings."""
    if cfg.replications < LOW_REPLICATION_WARNING:
        warnings.warn(
            f"only {cfg.replications} replication(s) per cell; summaries are single-draw noisy",
            stacklevel=2,
        )
    cfg_dict = {
        "estimators": list(cfg.estimators),
        "threshold_methods": list(cfg.threshold_methods),
        "tests": list(cfg.tests),
        "dness_grid": list(cfg.dness_grid),
        "var_form": cfg.var_form,
    }
    results, seeds, timings = {}, {}, {}
    pool = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for mi, name in enumerate(cfg.models):
            for ni, n in enumerate(cfg.sample_sizes):
                cell_seeds = [replication_seed(cfg.seed, mi, ni, k) for k in range(cfg.replications)]
                tasks = [(cfg_dict, name, int(n), s) for s in cell_seeds]
                t0 = time.perf_counter()
                if pool is None:
                    reps = [run_replication(t) for t in tasks]
                else:
                    reps = list(pool.map(run_replication, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
                timings[f"{name}\t{n}"] = time.perf_counter() - t0
                results[(name, n)] = reps
                seeds[f"{name}/{n}"] = cell_seeds
                log.info("cell %s n=%d done in %.1fs", name, n, timings[f"{name}\t{n}"])
    finally:
        if pool is not None:
            pool.shutdown()
    tables = aggregate(cfg, results)
    manifest = {
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out_dir", "workers")},
        "seed_rule": "blake2b-64(master:model_idx:n_idx:rep) little-endian",
        "tie_rule": "threshold ties resolve to the smallest candidate",
        "null_model_threshold": "floor((r_lo + r_hi) / 2) of the 10%/90% type-1 quantiles, R=0",
        "replication_seeds": seeds,
        "tables": {k: f"{k}.tsv" for k in tables},
    }
    out = StudyOutput(tables, results, manifest, timings)
    if write:
        write_study(cfg.out_dir, out)
    return out


def write_study(out_dir, out: StudyOutput):
    os.makedirs(out_dir, exist_ok=True)
    for name, table in out.tables.items():
        with open(os.path.join(out_dir, f"{name}.tsv"), "w", newline="\n") as fh:
            fh.write(table.to_tsv())
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(out.manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    # wall-clock durations vary run to run, so they stay out of the result tables
    with open(os.path.join(out_dir, "timings.tsv"), "w") as fh:
        fh.write("model\tn\tduration_seconds\n")
        for key, secs in out.timings.items():
            fh.write(f"{key}\t{secs:.3f}\n")


def rerun_cell(manifest: dict, model: str, n: int, rep: Optional[int] = None):
    """Regenerate the replication records of one cell (or one replication) from a manifest."""
    cfg = manifest["config"]
    cfg_dict = {
        "estimators": cfg["estimators"],
        "threshold_methods": cfg["threshold_methods"],
        "tests": cfg["tests"],
        "dness_grid": cfg["dness_grid"],
        "var_form": cfg["var_form"],
    }
    seeds = manifest["replication_seeds"][f"{model}/{n}"]
    if rep is not None:
        seeds = [seeds[rep]]
    return [run_replication((cfg_dict, model, int(n), s)) for s in seeds]

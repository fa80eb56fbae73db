"""Command-line interface: ``mttinar {simulate,fit,test,forecast,study}``.

Exit codes: 0 success, 2 input error, 3 numerical or convergence error,
4 truncation error. Failures print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
from scipy import stats

from . import __version__
from .cls import cls_fit
from .cml import cml_fit
from .errors import InputError, MTTINARError
from .forecast import (
    fit_scores,
    forecast_error_metrics,
    h_step_distribution,
    point_forecasts,
    rolling_forecast_evaluation,
    transition_matrix,
)
from .hypothesis import sequential_test
from .io import dump_report, load_series
from .model import ModelSpec, default_max_state, make_rng, simulate
from .study import MODELS, FULL_REPLICATIONS, StudyConfig, run_study
from .threshold import candidate_range, dness_search, search_r_cls_var, search_r_cml

SEARCHES = {"cml": search_r_cml, "clsvar": search_r_cls_var, "dness": dness_search}


def _csv_list(text, cast=str):
    return [cast(t) for t in text.split(",") if t.strip()]


def _quantiles(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise InputError(f"--quantiles expects 'lo,hi', got {text!r}") from None
    return lo, hi


def _spec_from_args(args):
    if getattr(args, "model", None):
        return MODELS[args.model]
    missing = [k for k in ("phi1", "phi2", "lam", "r") if getattr(args, k, None) is None]
    if missing:
        raise InputError(f"missing model parameters: {', '.join('--' + m for m in missing)}")
    return ModelSpec(args.phi1, args.phi2, args.lam, args.r, args.R)


def _out_path(args, name):
    return os.path.join(args.out_dir, name) if args.out_dir else None


def _emit(args, report, name):
    text = dump_report(report, _out_path(args, name))
    sys.stdout.write(text)


# --------------------------------------------------------------------------


def _resolve_r(x, args):
    """Return ``(r, search_report_or_None)`` from ``--r`` (an integer or 'search')."""
    if str(args.r) != "search":
        try:
            return int(args.r), None
        except ValueError:
            raise InputError(f"--r must be an integer or 'search', got {args.r!r}") from None
    rng_ = candidate_range(x, *_quantiles(args.quantiles))
    fn = SEARCHES[args.search]
    res = fn(x, args.R, range_=rng_)
    return res.r_hat, {
        "method": res.method,
        "range": list(rng_),
        "r_hat": res.r_hat,
        "per_candidate": res.per_candidate,
        "skipped": res.skipped,
        "tie_rule": "smallest candidate wins ties",
    }


def _plot_data(out_dir, x, report):
    res = np.asarray(report.pearson_residuals)
    k = min(20, res.size - 1)
    centred = res - res.mean()
    acf = [float(centred[: res.size - h] @ centred[h:] / (centred @ centred)) for h in range(k + 1)]
    from statsmodels.tsa.stattools import pacf

    pac = pacf(res, nlags=k, method="ywm")
    (osm, osr), _ = stats.probplot(res, dist="norm")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "residuals.tsv"), "w") as fh:
        fh.write("t\tobserved\tpearson_residual\n")
        for t, (obs, e) in enumerate(zip(x[1:], res), start=1):
            fh.write(f"{t}\t{obs}\t{e:.17g}\n")
    with open(os.path.join(out_dir, "residual_acf.tsv"), "w") as fh:
        fh.write("lag\tacf\tpacf\n")
        for h in range(k + 1):
            fh.write(f"{h}\t{acf[h]:.17g}\t{pac[h]:.17g}\n")
    with open(os.path.join(out_dir, "residual_qq.tsv"), "w") as fh:
        fh.write("theoretical\tsample\n")
        for a, b in zip(osm, osr):
            fh.write(f"{a:.17g}\t{b:.17g}\n")


def _fit_report(x, r, R, method, se):
    fit = (cml_fit if method == "cml" else cls_fit)(x, r, R)
    scores = fit_scores(x, fit, r, R) if fit.valid else None
    if method == "cml":
        ses = fit.hessian_std_errors if se == "hessian" else fit.std_errors
        cov = fit.hessian_covariance if se == "hessian" else fit.covariance
    else:
        ses, cov = fit.std_errors, fit.covariance
    report = {
        "method": fit.method,
        "r": r,
        "R": R,
        "estimates": {"phi1": fit.phi1, "phi2": fit.phi2, "lambda": fit.lam},
        "valid": fit.valid,
        "standard_errors": dict(zip(("phi1", "phi2", "lambda"), ses)) if ses is not None else None,
        "standard_error_kind": ("inverse negative Hessian" if se == "hessian" else "sandwich")
        if method == "cml" else "sandwich",
        "limit_covariance": cov,
        "n_transitions": fit.n_transitions,
        "n_lower_indicator": fit.n_lower,
        "n_upper_indicator": fit.n_upper,
    }
    if scores is not None:
        report.update({
            "loglik": scores.loglik,
            "aic": scores.aic,
            "bic": scores.bic,
            "rms": scores.rms,
            "pearson_residual_mean": scores.residual_mean,
            "pearson_residual_variance": scores.residual_variance,
        })
    return fit, scores, report


def cmd_simulate(args):
    spec = _spec_from_args(args)
    x = simulate(spec, args.n, make_rng(args.seed), x0=args.x0, burn_in=args.burn_in)
    text = "count\n" + "".join(f"{v}\n" for v in x)
    path = _out_path(args, args.output)
    if path:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_fit(args):
    x = load_series(args.series, args.column)
    r, search = _resolve_r(x, args)
    fit, scores, report = _fit_report(x, r, args.R, args.method, args.se)
    report["series"] = {"path": os.path.basename(args.series), "n": int(x.size)}
    report["threshold_search"] = search
    report["max_state_rule"] = "smallest M with every row 0..M keeping mass >= 1-1e-12"
    if args.plot_data and scores is not None and args.out_dir:
        _plot_data(args.out_dir, x, scores)
    _emit(args, report, "fit_report.json")
    return 0


def cmd_test(args):
    x = load_series(args.series, args.column)
    r, search = _resolve_r(x, args)
    mean_res, var_res, detected = sequential_test(x, r, args.R, form=args.form)

    def rec(t):
        if t is None:
            return None
        return {"statistic": t.statistic, "df": t.df, "p_value": t.p_value,
                "critical_value": t.critical_value, "reject": t.reject}

    report = {
        "r": r,
        "R": args.R,
        "threshold_search": search,
        "wald_e": rec(mean_res),
        "wald_var": rec(var_res),
        "wald_var_form": args.form,
        "structure_detected": detected,
        "sequence": "Wald-E first; Wald-Var only when Wald-E does not reject",
    }
    _emit(args, report, "test_report.json")
    return 0


def _forecast_spec(args):
    if args.fit_report:
        with open(args.fit_report) as fh:
            rep = json.load(fh)
        est = rep["estimates"]
        return ModelSpec(est["phi1"], est["phi2"], est["lambda"], rep["r"], rep["R"])
    return _spec_from_args(args)


def cmd_forecast(args):
    spec = _forecast_spec(args)
    horizons = _csv_list(args.horizons, int)
    x = load_series(args.series, args.column) if args.series else None
    origin = args.origin if args.origin is not None else (int(x[-1]) if x is not None else None)
    if origin is None:
        raise InputError("give --origin or a --series whose last value is the origin")
    observed_max = max(origin, int(x.max()) if x is not None else 0)
    max_state = args.max_state or default_max_state(spec, observed_max=observed_max)
    tm = transition_matrix(spec, max_state)
    out = {"spec": {"phi1": spec.phi1, "phi2": spec.phi2, "lambda": spec.lam, "r": spec.r, "R": spec.R},
           "origin": origin, "max_state": max_state, "horizons": {}}
    actuals = _csv_list(args.actuals, int) if args.actuals else None
    if actuals is not None and len(actuals) < max(horizons):
        raise InputError("--actuals must cover the largest horizon")
    for h in horizons:
        pmf = h_step_distribution(spec, origin, h, tm=tm)
        pf = point_forecasts(pmf)
        entry = {"mean": pf.mean, "mode": pf.mode, "median": pf.median,
                 "truncation_mass": pmf.truncation_mass, "truncation_warning": pmf.warning,
                 "pmf": pmf.probabilities}
        if actuals is not None:
            a = actuals[h - 1]
            entry["actual"] = a
            entry["errors"] = {k: forecast_error_metrics([a], [v]).__dict__
                               for k, v in (("mean", pf.mean), ("mode", pf.mode), ("median", pf.median))}
        out["horizons"][str(h)] = entry
    if args.holdout is not None:
        if x is None:
            raise InputError("--holdout needs --series")
        ev = rolling_forecast_evaluation(x, spec, horizons, holdout=args.holdout, max_state=max_state)
        out["rolling_evaluation"] = {
            "protocol": "targets are the last HOLDOUT observations, each forecast from the value h steps earlier",
            "holdout": args.holdout,
            "bias_sign": "forecast minus actual",
            "results": {str(h): {k: v.__dict__ for k, v in d.items()} for h, d in ev.items()},
        }
    _emit(args, out, "forecast_report.json")
    return 0


def cmd_study(args):
    reps = FULL_REPLICATIONS if args.full_replications else args.replications
    cfg = StudyConfig(
        models=_csv_list(args.models),
        sample_sizes=_csv_list(args.sizes, int),
        replications=reps,
        estimators=_csv_list(args.estimators),
        threshold_methods=_csv_list(args.thresholds),
        tests=_csv_list(args.tests),
        seed=args.seed,
        out_dir=args.out_dir or "study_out",
        workers=args.workers,
        var_form=args.form,
    )
    out = run_study(cfg)
    sys.stdout.write(json.dumps({"out_dir": cfg.out_dir, "tables": sorted(out.tables)}) + "\n")
    return 0


# --------------------------------------------------------------------------


def _add_common(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0,
                   help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker processes for the study harness")
    p.add_argument("--out-dir", dest="out_dir", default=d, help="directory for output files")


def _add_series(p):
    p.add_argument("series", help="delimited text file with the count series")
    p.add_argument("--column", default=None, help="column name or 0-based index (default: last)")


def _add_threshold(p):
    p.add_argument("--r", default="search", help="threshold value or 'search' (default)")
    p.add_argument("--R", type=int, choices=(0, 1), default=0, help="regime order flag")
    p.add_argument("--search", choices=sorted(SEARCHES), default="cml")
    p.add_argument("--quantiles", default="0.1,0.9", help="candidate range quantiles 'lo,hi'")


def _add_params(p):
    p.add_argument("--model", choices=sorted(MODELS), help="named preset")
    p.add_argument("--phi1", type=float)
    p.add_argument("--phi2", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--R", type=int, choices=(0, 1), default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="mttinar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a series")
    _add_common(p, suppress=True)
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=500)
    p.add_argument("--x0", type=int, default=None)
    p.add_argument("--output", default="series.csv", help="file name inside --out-dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate parameters (and the threshold)")
    _add_common(p, suppress=True)
    _add_series(p)
    _add_threshold(p)
    p.add_argument("--method", choices=("cls", "cml"), default="cml")
    p.add_argument("--se", choices=("hessian", "sandwich"), default="hessian",
                   help="CML standard errors (CLS always uses the sandwich)")
    p.add_argument("--plot-data", action="store_true", help="write residual, ACF/PACF and QQ data")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="Wald tests for a piecewise structure")
    _add_common(p, suppress=True)
    _add_series(p)
    _add_threshold(p)
    p.add_argument("--form", choices=("sum", "joint"), default="sum",
                   help="Wald-Var statistic form")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("forecast", help="h-step forecast distributions")
    _add_common(p, suppress=True)
    _add_params(p)
    p.add_argument("--series", default=None)
    p.add_argument("--column", default=None)
    p.add_argument("--fit-report", dest="fit_report", default=None, help="fit_report.json to read parameters from")
    p.add_argument("--horizons", default="1,5,10,20,30")
    p.add_argument("--origin", type=int, default=None)
    p.add_argument("--actuals", default=None, help="comma list of future values, one per step")
    p.add_argument("--holdout", type=int, default=None, help="rolling evaluation over the last HOLDOUT values")
    p.add_argument("--max-state", dest="max_state", type=int, default=None)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("study", help="Monte-Carlo study")
    _add_common(p, suppress=True)
    p.add_argument("--models", default="A1")
    p.add_argument("--sizes", default="200,500,800")
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--full-replications", action="store_true", help=f"use {FULL_REPLICATIONS} replications")
    p.add_argument("--estimators", default="cls,cml")
    p.add_argument("--thresholds", default="")
    p.add_argument("--tests", default="")
    p.add_argument("--form", choices=("sum", "joint"), default="sum")
    p.set_defaults(func=cmd_study)
    return parser


def error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": getattr(exc, "exit_code", 3)}
    for attr in ("line", "suggested_max_state"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = getattr(exc, attr)
    return rec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except MTTINARError as exc:
        sys.stderr.write(json.dumps(error_record(exc)) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "OSError", "message": str(exc), "exit_code": 2}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``coadaptive {fit,cv,simulate,diagnose}``.

Exit codes: 0 success, 2 data or usage error, 3 non-convergence. Results
are JSON; column indices in every user-facing file are 1-based. Output
carries no timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import GroupStructure, standardize
from .exceptions import ConstantColumnWarning, NonConvergenceError
from .group_lasso import fit_group_lasso
from .model_selection import (
    CvPlan,
    GroupLassoProcedure,
    LassoProcedure,
    cross_validate,
    fit_two_stage,
)
from .re_diagnostics import check_lemma_chain, condition_report
from .simulation import BENCHMARK_SNR, METHODS, benchmark_scenario, run_benchmark
from .solver import fit_weighted_lasso
from .weights import SCHEMES, WeightScheme

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NONCONVERGENCE = 3

TABLE_LABELS = {
    "lasso": "Lasso",
    "adaptive": "Adaptive",
    "grouplasso": "Group Lasso",
    "coadaptive": "Co-adaptive",
}
SGL_NOTE = "absent: the sparse group lasso is not implemented in this package"


class DataError(Exception):
    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _dump(doc: dict) -> str:
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


def _write(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _read_matrix(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {path}", path)
    try:
        return np.loadtxt(p, delimiter=",", ndmin=2)
    except ValueError:
        pass
    try:
        return np.loadtxt(p, delimiter=",", ndmin=2, skiprows=1)
    except ValueError as err:
        raise DataError(f"cannot parse numeric CSV {path}: {err}", path) from err


def _read_vector(path: str) -> np.ndarray:
    a = _read_matrix(path)
    if 1 not in a.shape:
        raise DataError(f"{path}: expected a single column or row, got shape {a.shape}", path)
    return a.ravel()


def _read_groups(path: str | None, p: int) -> GroupStructure | None:
    if path is None:
        return None
    if not Path(path).is_file():
        raise DataError(f"file not found: {path}", path)
    try:
        return GroupStructure.from_json(path, p)
    except (ValueError, IndexError, TypeError) as err:
        raise DataError(f"invalid group file {path}: {err}", path) from err


def _load_xy(args):
    x = _read_matrix(args.x)
    y = _read_vector(args.y)
    groups = _read_groups(getattr(args, "groups", None), x.shape[1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantColumnWarning)
        data = standardize(x, y)
    return data, groups


def _plan(args) -> CvPlan:
    return CvPlan(
        k=args.cv_folds, seed=args.seed, grid_size=args.grid_size,
        lambda_min_ratio=args.lambda_min_ratio, one_se=args.one_se,
    )


def _scheme(args, groups) -> WeightScheme:
    if args.method == "adaptive":
        return WeightScheme("adaptive")
    if groups is None:
        raise DataError("--groups is required for --method coadaptive")
    return WeightScheme(args.scheme, args.trim_fraction)


def _fit_summary(data, beta, lam, kkt, converged, iterations) -> dict:
    coef, icpt = data.coef_to_raw(beta)
    return {
        "coef": coef,
        "intercept": icpt,
        "lambda": lam,
        "active_set": (np.flatnonzero(beta) + 1),
        "kkt_residual": kkt,
        "converged": converged,
        "iterations": iterations,
    }


def _lasso_like(data, fit) -> dict:
    return _fit_summary(data, fit.beta, fit.lam, fit.kkt_residual, fit.converged, fit.iterations)


def _group_like(data, fit) -> dict:
    out = _fit_summary(
        data, fit.beta, fit.lam, fit.block_kkt_residual, fit.converged, fit.iterations
    )
    out["active_groups"] = fit.active_groups + 1
    return out


def _weight_summary(w: np.ndarray) -> dict:
    finite = w[np.isfinite(w)]
    return {
        "n_finite": int(finite.size),
        "n_excluded": int(w.size - finite.size),
        "min": float(finite.min()) if finite.size else None,
        "max": float(finite.max()) if finite.size else None,
        "finite_set": np.flatnonzero(np.isfinite(w)) + 1,
    }


def _cv_summary(cv) -> dict:
    return {
        "grid": cv.grid,
        "cv_curve": cv.cv_curve,
        "cv_se": cv.cv_se,
        "best_index": cv.best_index,
        "best_lambda": cv.best_lambda,
        "n_failed_cells": cv.n_failed,
        "flagged": cv.flagged,
    }


def _header(args, data) -> dict:
    return {
        "command": args.command,
        "version": __version__,
        "method": args.method,
        "n_samples": data.n_samples,
        "n_features": data.n_features,
    }


def _two_stage(args, data, groups, with_curves: bool) -> dict:
    groups = groups if groups is not None else GroupStructure.singletons(data.n_features)
    plan = _plan(args)
    res = fit_two_stage(data, groups, _scheme(args, groups), plan, plan)
    out = _lasso_like(data, res.stage2)
    out["lambda"] = res.cv1.best_lambda
    out["mu"] = res.cv2.best_lambda if res.cv2 is not None else None
    out["scheme"] = res.scheme.kind
    out["all_excluded"] = res.all_excluded
    out["weights"] = _weight_summary(res.weights)
    out["stage1_active_set"] = np.flatnonzero(res.stage1.beta) + 1
    if with_curves:
        out["stage1_cv"] = _cv_summary(res.cv1)
        out["stage2_cv"] = _cv_summary(res.cv2) if res.cv2 is not None else None
    return out


def cmd_fit(args) -> int:
    data, groups = _load_xy(args)
    doc = _header(args, data)
    if args.method in ("adaptive", "coadaptive"):
        if args.lam is not None:
            raise DataError("--lambda applies to lasso and grouplasso only; two-stage "
                            "methods choose both tuning parameters by cross-validation")
        doc.update(_two_stage(args, data, groups, with_curves=False))
    elif args.method == "lasso":
        if args.lam is None:
            cv = cross_validate(data, LassoProcedure(), _plan(args))
            doc.update(_lasso_like(data, cv.fit))
        else:
            doc.update(_lasso_like(data, fit_weighted_lasso(data, None, args.lam)))
    else:
        if groups is None:
            raise DataError("--groups is required for --method grouplasso")
        if args.lam is None:
            cv = cross_validate(data, GroupLassoProcedure(groups), _plan(args))
            doc.update(_group_like(data, cv.fit))
        else:
            doc.update(_group_like(data, fit_group_lasso(data, groups, args.lam)))
    _write(_dump(doc), args.output)
    return EXIT_OK


def cmd_cv(args) -> int:
    data, groups = _load_xy(args)
    doc = _header(args, data)
    if args.method in ("adaptive", "coadaptive"):
        doc.update(_two_stage(args, data, groups, with_curves=True))
    else:
        if args.method == "lasso":
            cv = cross_validate(data, LassoProcedure(), _plan(args))
            doc.update(_lasso_like(data, cv.fit))
        else:
            if groups is None:
                raise DataError("--groups is required for --method grouplasso")
            cv = cross_validate(data, GroupLassoProcedure(groups), _plan(args))
            doc.update(_group_like(data, cv.fit))
        doc["cv"] = _cv_summary(cv)
    _write(_dump(doc), args.output)
    return EXIT_OK


def table_csv(report) -> str:
    """Table-shaped projection of a benchmark: one row per method."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "scenario", "median", "mean", "stderr", "n_ok", "note"])
    name = report.spec.name or "custom"
    order = ["lasso", "adaptive", "grouplasso", "sgl", "coadaptive"]
    for m in order:
        if m == "sgl":
            w.writerow(["SGL", name, "", "", "", "", SGL_NOTE])
            continue
        if m not in report.summary:
            continue
        s = report.summary[m]
        w.writerow([TABLE_LABELS[m], name, repr(s.median), repr(s.mean), repr(s.stderr), s.n_ok, ""])
    return buf.getvalue()


def cmd_simulate(args) -> int:
    spec = benchmark_scenario(args.scenario, args.coef, n_reps=args.reps, seed=args.seed, snr=args.snr)
    methods = tuple(m for chunk in args.methods for m in chunk.split(",") if m)
    report = run_benchmark(
        spec, methods, n_jobs=args.jobs, cv_folds=args.cv_folds, grid_size=args.grid_size,
        lambda_min_ratio=args.lambda_min_ratio,
    )
    doc = {"command": "simulate", "version": __version__, **report.to_dict()}
    _write(_dump(doc), args.output)
    csv_path = args.csv
    if csv_path is None and args.output is not None:
        csv_path = str(Path(args.output).with_suffix(".csv"))
    if csv_path is not None:
        Path(csv_path).write_text(table_csv(report))
    return EXIT_OK


def _parse_support(text: str, p: int) -> list[int]:
    try:
        idx = [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as err:
        raise DataError(f"--support must be comma-separated integers: {text!r}") from err
    if not idx or min(idx) < 1 or max(idx) > p:
        raise DataError(f"--support indices must lie in 1..{p}")
    return [i - 1 for i in idx]


def cmd_diagnose(args) -> int:
    x = _read_matrix(args.x)
    n, p = x.shape
    groups = _read_groups(args.groups, p)
    if groups is None:
        raise DataError("--groups is required for diagnose")
    s = _parse_support(args.support, p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantColumnWarning)
        data = standardize(x, np.zeros(n))
    chain = check_lemma_chain(data, groups, s, args.l, mode=args.mode, seed=args.seed)
    doc = {
        "command": "diagnose",
        "version": __version__,
        "n_samples": n,
        "n_features": p,
        "support": [i + 1 for i in s],
        "l": args.l,
        "lemma_chain": {
            "names": ["cover_times_phi2", "phi2_group", "min_group_phi2", "phi2_lower_bound"],
            "values": list(chain.values),
            "holds": list(chain.holds),
            "passed": chain.passed,
            "cover_size": chain.cover_size,
            "phi2": chain.phi2,
            "slack": chain.slack,
        },
    }
    if args.beta is not None:
        beta = _read_vector(args.beta)
        if beta.size != p:
            raise DataError(f"{args.beta}: expected {p} coefficients, got {beta.size}", args.beta)
        rep = condition_report(
            data, groups, s, beta, args.sigma, args.gamma1, args.gamma2,
            mode="auto" if args.mode == "exact_small" else args.mode, seed=args.seed,
        )
        doc["conditions"] = rep.to_dict()
    _write(_dump(doc), args.output)
    return EXIT_OK


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for folds, starts and replicates")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")
    common.add_argument("--output", help="result file (default: stdout)")

    cvopts = argparse.ArgumentParser(add_help=False)
    cvopts.add_argument("--cv-folds", type=int, default=10)
    cvopts.add_argument("--grid-size", type=int, default=100)
    cvopts.add_argument("--lambda-min-ratio", type=float, default=None,
                        help="grid floor relative to lambda_max (default 1e-3 if n >= p, "
                             "else 0.01 for the Lasso and 0.05 for the Group Lasso)")
    cvopts.add_argument("--one-se", action="store_true", help="one-standard-error rule")

    data_opts = argparse.ArgumentParser(add_help=False)
    data_opts.add_argument("--x", required=True, help="design matrix CSV")
    data_opts.add_argument("--y", required=True, help="response CSV (one column)")
    data_opts.add_argument("--groups", help='JSON {"groups": [[1, 2], ...]}, 1-based')
    data_opts.add_argument("--method", choices=METHODS, default="lasso")
    data_opts.add_argument("--scheme", choices=SCHEMES, default="coadaptive_min")
    data_opts.add_argument("--trim-fraction", type=float, default=None)

    parser = argparse.ArgumentParser(prog="coadaptive", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", parents=[common, cvopts, data_opts], help="fit one model")
    p_fit.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="fixed tuning parameter (lasso, grouplasso); omitted = choose by CV")
    p_fit.set_defaults(func=cmd_fit)

    p_cv = sub.add_parser("cv", parents=[common, cvopts, data_opts], help="cross-validate")
    p_cv.set_defaults(func=cmd_cv)

    p_sim = sub.add_parser("simulate", parents=[common, cvopts], help="synthetic benchmark")
    p_sim.add_argument("--scenario", required=True, choices=["1", "2", "3", "4", "5", "overlap"])
    p_sim.add_argument("--coef", choices=["const", "norm"], default="const")
    p_sim.add_argument("--reps", type=int, default=30)
    p_sim.add_argument("--snr", type=_positive_float, default=BENCHMARK_SNR,
                       help="signal-to-noise variance ratio")
    p_sim.add_argument("--methods", nargs="+", default=[",".join(METHODS)])
    p_sim.add_argument("--csv", help="table CSV (default: next to --output)")
    p_sim.set_defaults(func=cmd_simulate)

    p_diag = sub.add_parser("diagnose", parents=[common], help="restricted-eigenvalue report")
    p_diag.add_argument("--x", required=True)
    p_diag.add_argument("--groups", required=True)
    p_diag.add_argument("--support", required=True, help="1-based indices, e.g. 1,4")
    p_diag.add_argument("--l", type=_positive_float, default=3.0, help="cone parameter")
    p_diag.add_argument("--mode", choices=["exact_small", "heuristic"], default="exact_small")
    p_diag.add_argument("--beta", help="true coefficients CSV for the condition report")
    p_diag.add_argument("--sigma", type=float, default=1.0)
    p_diag.add_argument("--gamma1", type=float, default=1.0)
    p_diag.add_argument("--gamma2", type=float, default=0.0)
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def _error(args, kind: str, err: Exception, code: int) -> int:
    obj = {"error": {"type": kind, "exception": type(err).__name__, "message": str(err)}}
    path = getattr(err, "path", None) or getattr(err, "filename", None)
    if path is not None:
        obj["error"]["path"] = str(path)
    text = _dump(obj)
    sys.stderr.write(text)
    out = getattr(args, "output", None)
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonConvergenceError as err:
        return _error(args, "non_convergence", err, EXIT_NONCONVERGENCE)
    except (DataError, OSError, ValueError, IndexError) as err:
        return _error(args, "data", err, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())

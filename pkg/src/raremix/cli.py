"""Command-line entry point: fit, simulate, analyze, score.

All outputs are written atomically under --out. Tabular results are CSV,
structured results JSON; nothing stochastic runs without a seed, and no
timing or host information enters any output file (wall time goes to stderr),
so identical invocations produce identical bytes.

Exit codes: 0 success; 2 unparseable flags or input files; 3 schema mismatch
(wrong columns or fields, dimension conflicts); 4 invalid configuration or a
missing input file; 5 numerical failure; 6 diverging ratio integral
(2*inv(sigma1) - inv(sigma0) not positive definite); 7 fit stopped at the
iteration cap without converging.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import _backend
from .contraction import (
    block_spectral_radius_check,
    jacobian_analytic,
    limit_matrix_M,
    limit_matrix_Mstar,
    min_contracting_kappa,
)
from .core import LabeledDataset, MixtureParams
from .em import FitConfig, Termination, fit, init_strategy
from .evalkit import ScoredGroup, evaluate_groups, score_points, write_scores_csv
from .exceptions import (
    ConfigError,
    CsvFormatError,
    DivergingIntegralError,
    EmptyCellError,
    EmptyComponentError,
    InitializationError,
    NumericalError,
    SchemaError,
    SingularCovarianceError,
    UndefinedMetricError,
)
from .io_utils import (
    format_float,
    read_grouped_csv,
    read_labeled_csv,
    read_unlabeled_csv,
    write_json_atomic,
    write_matrix_csv,
    atomic_write_text,
)
from .simlab import PACKAGE_VERSION, SimDesign, resolve_workers, run_experiment

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SCHEMA = 3
EXIT_CONFIG = 4
EXIT_NUMERICAL = 5
EXIT_DIVERGING = 6
EXIT_MAX_ITER = 7

DEFAULT_KAPPA_SWEEP = "0,0.3333333333333333,1,3"


def _load_theta(path) -> MixtureParams:
    with open(path, "r") as handle:
        return MixtureParams.from_dict(json.load(handle))


def _preset_theta(name: str, alpha: float) -> MixtureParams:
    if name == "paper1d":
        return MixtureParams(
            alpha=alpha, mu0=[1.5], sigma0=[[1.0]], mu1=[-1.5], sigma1=[[1.0]]
        )
    raise ConfigError(f"unknown preset {name!r}")


def cmd_fit(args) -> int:
    data = read_unlabeled_csv(args.unlabeled)
    labeled = read_labeled_csv(args.labeled) if args.labeled else None
    if labeled is not None and labeled.p != data.p:
        raise SchemaError(
            f"dimension mismatch: unlabeled p={data.p}, labeled p={labeled.p}"
        )
    if data.n == 0 and (labeled is None or labeled.m == 0):
        raise ConfigError("no data rows in either input")
    if args.init_theta:
        theta0 = _load_theta(args.init_theta)
        if theta0.p != data.p:
            raise SchemaError(
                f"dimension mismatch: data p={data.p}, start point p={theta0.p}"
            )
    else:
        kind = args.init
        if kind == "auto":
            has_both = (
                labeled is not None
                and labeled.m > 0
                and 0.0 < labeled.n_positive < labeled.m
            )
            kind = "labeled_moments" if has_both else "quantile_split"
        theta0 = init_strategy(
            data, labeled, kind, rng_seed=args.seed, alpha0=args.init_alpha
        )
    config = FitConfig(
        max_iter=args.max_iter, tol=args.tol, ridge=args.ridge, record_trace=True
    )
    result = fit(data, labeled, theta0, config)
    os.makedirs(args.out, exist_ok=True)
    write_json_atomic(os.path.join(args.out, "theta.json"), result.theta_hat.to_dict())
    write_json_atomic(
        os.path.join(args.out, "fit.json"),
        {
            "n_iter": result.n_iter,
            "converged": result.converged,
            "termination": result.termination.value,
            "loglik": result.loglik,
            "message": result.message,
            "tol": config.tol,
            "max_iter": config.max_iter,
            "backend": _backend.backend_name,
            "package_version": PACKAGE_VERSION,
        },
    )
    trace_lines = ["iteration,loglik"]
    if result.loglik_trace is not None:
        for i, ll in enumerate(result.loglik_trace):
            trace_lines.append(f"{i},{format_float(ll)}")
    atomic_write_text(os.path.join(args.out, "trace.csv"), "\n".join(trace_lines) + "\n")
    if result.termination == Termination.MAX_ITER_REACHED:
        print(f"fit: no convergence within {config.max_iter} iterations", file=sys.stderr)
        return EXIT_MAX_ITER
    if result.termination == Termination.NUMERICAL_FAILURE:
        print(f"fit: numerical failure: {result.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        with open(args.config, "r") as handle:
            design = SimDesign.from_dict(json.load(handle))
        if args.seed is not None:
            design = dataclasses.replace(design, seed=args.seed)
    else:
        if args.seed is None:
            raise ConfigError("--grid requires --seed")
        design = SimDesign.paper_grid(seed=args.seed, desk=args.desk)
    if args.reps is not None:
        design = dataclasses.replace(design, reps=args.reps)
    workers = resolve_workers(args.workers)
    start = time.perf_counter()
    report = run_experiment(design, workers=workers, keep_rep_details=args.per_rep)
    elapsed = time.perf_counter() - start
    os.makedirs(args.out, exist_ok=True)
    report.write_csv(os.path.join(args.out, "cells.csv"))
    report.write_json(os.path.join(args.out, "report.json"), include_reps=args.per_rep)
    print(
        f"simulate: {len(report.cells)} cells x {design.reps} reps "
        f"in {elapsed:.1f}s ({workers} worker(s), {report.backend} backend)",
        file=sys.stderr,
    )
    return EXIT_OK


def _parse_kappa_sweep(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --kappa-sweep: {exc}") from exc
    if not values or any(v < 0 for v in values):
        raise ConfigError(f"--kappa-sweep needs nonnegative values, got {text!r}")
    return values


def cmd_analyze(args) -> int:
    if args.theta:
        theta = _load_theta(args.theta)
    else:
        theta = _preset_theta(args.preset, args.alpha)
    kappas = _parse_kappa_sweep(args.kappa_sweep)
    limit = limit_matrix_M(theta)
    os.makedirs(args.out, exist_ok=True)
    write_matrix_csv(os.path.join(args.out, "M.csv"), limit.mat)
    stars = []
    for kappa in kappas:
        star = limit_matrix_Mstar(theta, kappa)
        write_matrix_csv(os.path.join(args.out, f"Mstar_kappa_{kappa:g}.csv"), star.mat)
        stars.append(
            {
                "kappa": kappa,
                "spectral_radius": star.spectral_radius,
                "block_radius": block_spectral_radius_check(theta, kappa),
            }
        )
    q = theta.q
    det_gap = float(np.linalg.det(limit.mat - np.eye(q)))
    summary = {
        "theta": theta.to_dict(),
        "rho_M": limit.spectral_radius,
        "det_M_minus_I": det_gap,
        "kappa_sweep": stars,
        "min_contracting_kappa": min_contracting_kappa(theta),
        "package_version": PACKAGE_VERSION,
    }
    if args.data:
        data = read_unlabeled_csv(args.data)
        labeled = read_labeled_csv(args.labeled) if args.labeled else None
        if labeled is not None and labeled.p != data.p:
            raise SchemaError(
                f"dimension mismatch: unlabeled p={data.p}, labeled p={labeled.p}"
            )
        if data.p != theta.p:
            raise SchemaError(f"dimension mismatch: data p={data.p}, theta p={theta.p}")
        mapping = "mem" if labeled is not None and labeled.m > 0 else "em"
        report = jacobian_analytic(mapping, data, labeled, theta)
        write_matrix_csv(os.path.join(args.out, "jacobian.csv"), report.jac)
        summary["jacobian"] = {
            "mapping": mapping,
            "spectral_radius": report.spectral_radius,
            "n": data.n,
            "m": 0 if labeled is None else labeled.m,
        }
    write_json_atomic(os.path.join(args.out, "summary.json"), summary)
    return EXIT_OK


def cmd_score(args) -> int:
    theta = _load_theta(args.theta)
    groups = read_grouped_csv(args.data)
    scored = []
    for gid, x, labels in groups:
        if x.shape[1] != theta.p:
            raise SchemaError(
                f"dimension mismatch: data p={x.shape[1]}, theta p={theta.p}"
            )
        scored.append(
            ScoredGroup(group_id=gid, scores=score_points(theta, x), labels=labels)
        )
    summary = evaluate_groups(scored)
    if summary.n_skipped_auc:
        print(
            f"score: {summary.n_skipped_auc} single-class group(s) skipped for AUC",
            file=sys.stderr,
        )
    os.makedirs(args.out, exist_ok=True)
    write_scores_csv(os.path.join(args.out, "scores.csv"), scored)
    write_json_atomic(os.path.join(args.out, "summary.json"), summary.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raremix",
        description="Two-component Gaussian mixture estimation under rare events, "
        "with convergence-rate diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the mixture to CSV data")
    p_fit.add_argument("--unlabeled", required=True, help="CSV with columns x1..xp")
    p_fit.add_argument("--labeled", help="CSV with columns x1..xp,y")
    p_fit.add_argument(
        "--init",
        default="auto",
        choices=["auto", "labeled_moments", "quantile_split"],
        help="start-point strategy (auto: labeled moments when both classes "
        "are labeled, else quantile split)",
    )
    p_fit.add_argument("--init-theta", help="JSON start point (overrides --init)")
    p_fit.add_argument(
        "--init-alpha",
        type=float,
        default=0.1,
        help="quantile fraction for --init quantile_split",
    )
    p_fit.add_argument("--tol", type=float, default=1e-6)
    p_fit.add_argument("--max-iter", type=int, default=5000)
    p_fit.add_argument("--ridge", type=float, default=0.0)
    p_fit.add_argument("--seed", type=int, help="reserved for stochastic start points")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a replication grid")
    src = p_sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="design JSON")
    src.add_argument("--grid", choices=["paper"], help="named design preset")
    p_sim.add_argument("--desk", action="store_true", help="reduce --grid to 50 reps")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--reps", type=int, help="override replication count")
    p_sim.add_argument(
        "--workers", type=int, help="process count (default: RAREMIX_WORKERS or 1)"
    )
    p_sim.add_argument(
        "--per-rep", action="store_true", help="embed per-replication records in JSON"
    )
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="limit matrices and Jacobian diagnostics")
    src = p_an.add_mutually_exclusive_group(required=True)
    src.add_argument("--theta", help="parameter JSON")
    src.add_argument("--preset", choices=["paper1d"], help="named parameter preset")
    p_an.add_argument(
        "--alpha", type=float, default=0.001, help="rare-class weight for --preset"
    )
    p_an.add_argument("--data", help="unlabeled CSV for a finite-sample Jacobian")
    p_an.add_argument("--labeled", help="labeled CSV (switches the Jacobian to the pooled mapping)")
    p_an.add_argument("--kappa-sweep", default=DEFAULT_KAPPA_SWEEP)
    p_an.add_argument("--out", required=True)
    p_an.set_defaults(func=cmd_analyze)

    p_sc = sub.add_parser("score", help="posterior scores and detection measures")
    p_sc.add_argument("--theta", required=True, help="parameter JSON")
    p_sc.add_argument("--data", required=True, help="CSV with columns group_id,x1..xp,label")
    p_sc.add_argument("--out", required=True)
    p_sc.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "simulate" and getattr(args, "desk", False):
        parser.error("--desk only applies to simulate --grid")
    if args.command == "simulate" and args.desk and not args.grid:
        parser.error("--desk requires --grid")
    try:
        return args.func(args)
    except CsvFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"error: missing input file: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergingIntegralError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGING
    except (
        SingularCovarianceError,
        EmptyComponentError,
        NumericalError,
        InitializationError,
        EmptyCellError,
        UndefinedMetricError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

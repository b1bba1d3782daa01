"""Replicated estimation experiments over an (alpha, labeling-fraction) grid.

Each grid cell draws fresh data at its own rare-class weight, fits the
mixture from a perturbed-truth start, and records the packed estimation error
(after component alignment), the iteration count, and the spectral radius of
the analytic mapping Jacobian at the true parameters. Cell aggregates are the
coordinate-averaged RMSE and the means of the other two. Seeds derive from a
root seed by (cell, replication) counters, so any subset of the grid can be
recomputed independently and cells can run in parallel.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .core import Dataset, LabeledDataset, MixtureParams
from .em import FitConfig, FitResult, Termination, fit, init_true_perturbed
from .contraction import jacobian_analytic
from .exceptions import ConfigError, EmptyCellError, RareMixError
from .io_utils import atomic_write_text, format_float, write_json_atomic

PACKAGE_VERSION = "0.1.0"

TABLE_ALPHAS = (0.5, 0.2, 0.1, 0.01, 0.001)
TABLE_LABEL_FRACS = (0.0, 0.01, 0.05, 0.10, 0.25, 0.50)

STOPPING_RULE = (
    "max abs componentwise change of the packed parameter vector <= tol"
)
INIT_RULE = (
    "true parameters with means shifted U(-mean_scale, mean_scale) and variance "
    "diagonal shifted U(-var_scale, var_scale); starting weight = empirical "
    "labeled positive fraction clamped to >= 0.5/m when labeled rows exist, "
    "else the true weight"
)


def default_truth_1d() -> MixtureParams:
    """Well-separated unit-variance 1-D pair used by the reproduction grid;
    the stored weight is a placeholder that each cell overrides."""
    return MixtureParams(
        alpha=0.5, mu0=[1.5], sigma0=[[1.0]], mu1=[-1.5], sigma1=[[1.0]]
    )


@dataclass(frozen=True)
class SimDesign:
    """Grid layout for a replication experiment. ``theta_true`` supplies the
    component blocks; its weight is replaced by each cell's ``alpha``."""

    n_total: int = 100_000
    alphas: tuple = TABLE_ALPHAS
    label_fracs: tuple = TABLE_LABEL_FRACS
    reps: int = 500
    theta_true: MixtureParams = field(default_factory=default_truth_1d)
    seed: int = 0
    fit_config: FitConfig = field(default_factory=FitConfig)
    mean_scale: float = 0.5
    var_scale: float = 0.2
    rho_at_estimate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "label_fracs", tuple(float(f) for f in self.label_fracs))
        if self.n_total < 10:
            raise ConfigError(f"n_total must be >= 10, got {self.n_total}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not self.alphas or not all(0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError(f"alphas must lie in (0, 1), got {self.alphas}")
        if not self.label_fracs or not all(0.0 <= f < 1.0 for f in self.label_fracs):
            raise ConfigError(f"label fractions must lie in [0, 1), got {self.label_fracs}")
        if self.mean_scale < 0 or self.var_scale < 0:
            raise ConfigError("perturbation scales must be nonnegative")
        if not isinstance(self.theta_true, MixtureParams):
            raise ConfigError("theta_true must be a MixtureParams value")

    @classmethod
    def paper_grid(cls, seed: int, desk: bool = False, **overrides):
        """The full reproduction grid; ``desk`` drops replications to 50."""
        overrides.setdefault("reps", 50 if desk else 500)
        return cls(seed=seed, **overrides)

    def cells(self):
        """(alpha, label_frac) pairs, row-major in (alphas x label_fracs)."""
        return [(a, f) for a in self.alphas for f in self.label_fracs]

    def cell_truth(self, alpha: float) -> MixtureParams:
        return dataclasses.replace(self.theta_true, alpha=alpha)

    def to_dict(self):
        return {
            "n_total": self.n_total,
            "alphas": list(self.alphas),
            "label_fracs": list(self.label_fracs),
            "reps": self.reps,
            "theta_true": self.theta_true.to_dict(),
            "seed": self.seed,
            "tol": self.fit_config.tol,
            "max_iter": self.fit_config.max_iter,
            "ridge": self.fit_config.ridge,
            "mean_scale": self.mean_scale,
            "var_scale": self.var_scale,
            "rho_at_estimate": self.rho_at_estimate,
        }

    @classmethod
    def from_dict(cls, d):
        known = {
            "n_total",
            "alphas",
            "label_fracs",
            "reps",
            "theta_true",
            "seed",
            "tol",
            "max_iter",
            "ridge",
            "mean_scale",
            "var_scale",
            "rho_at_estimate",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown design fields: {sorted(unknown)}")
        kwargs = {k: d[k] for k in known & set(d) if k not in ("theta_true", "tol", "max_iter", "ridge")}
        if "theta_true" in d:
            kwargs["theta_true"] = MixtureParams.from_dict(d["theta_true"])
        fit_kwargs = {k: d[k] for k in ("tol", "max_iter", "ridge") if k in d}
        if fit_kwargs:
            kwargs["fit_config"] = FitConfig(**fit_kwargs)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid design: {exc}") from exc


def generate_dataset(alpha, theta_true, n, rng):
    """Draw n rows of the mixture. Returns (Dataset, hidden labels); the
    labels are for evaluation only and never reach the fitter."""
    p = theta_true.p
    y = rng.random(n) < alpha
    z = rng.standard_normal((n, p))
    x = theta_true.mu0 + z @ theta_true.chol0.lower.T
    if y.any():
        x[y] = theta_true.mu1 + z[y] @ theta_true.chol1.lower.T
    return Dataset(x=x), y.astype(np.int8)


def generate_labeled(alpha, theta_true, m, rng) -> LabeledDataset:
    """Draw m labeled rows of the same mixture (labels observed)."""
    data, y = generate_dataset(alpha, theta_true, m, rng)
    return LabeledDataset(x=data.x, y=y.astype(float))


def align_components(theta_hat: MixtureParams, theta_true: MixtureParams) -> MixtureParams:
    """Resolve label switching: return theta_hat or its component swap,
    whichever is closer to theta_true in packed Euclidean distance."""
    direct = theta_hat.pack() - theta_true.pack()
    swapped = theta_hat.swapped()
    other = swapped.pack() - theta_true.pack()
    if float(other @ other) < float(direct @ direct):
        return swapped
    return theta_hat


@dataclass(frozen=True)
class RepRecord:
    """One replication's outcome. ``error`` is packed (aligned estimate minus
    truth); failed records carry no error or radius."""

    cell_index: int
    rep: int
    alpha: float
    label_frac: float
    failed: bool
    termination: str
    message: str
    n_iter: int
    rho: float | None
    error: tuple | None


def _cell_sizes(design: SimDesign, label_frac: float):
    m = int(round(design.n_total * label_frac))
    return design.n_total - m, m


def run_replication(design: SimDesign, cell_index: int, rep: int) -> RepRecord:
    """Generate, fit, and diagnose one replication of one grid cell."""
    alpha, label_frac = design.cells()[cell_index]
    truth = design.cell_truth(alpha)
    n, m = _cell_sizes(design, label_frac)
    data_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=design.seed, spawn_key=(cell_index, rep, 0))
    )
    init_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=design.seed, spawn_key=(cell_index, rep, 1))
    )
    data, _ = generate_dataset(alpha, truth, n, data_rng)
    labeled = (
        generate_labeled(alpha, truth, m, data_rng) if m else LabeledDataset.empty(truth.p)
    )
    if m:
        alpha0 = max(labeled.n_positive, 0.5) / m
    else:
        alpha0 = truth.alpha
    try:
        theta0 = init_true_perturbed(
            truth,
            mean_scale=design.mean_scale,
            var_scale=design.var_scale,
            alpha0=alpha0,
            rng=init_rng,
        )
        result: FitResult = fit(data, labeled, theta0, design.fit_config)
    except RareMixError as exc:
        return RepRecord(
            cell_index=cell_index,
            rep=rep,
            alpha=alpha,
            label_frac=label_frac,
            failed=True,
            termination=Termination.NUMERICAL_FAILURE.value,
            message=str(exc),
            n_iter=0,
            rho=None,
            error=None,
        )
    if result.termination != Termination.TOLERANCE_MET:
        return RepRecord(
            cell_index=cell_index,
            rep=rep,
            alpha=alpha,
            label_frac=label_frac,
            failed=True,
            termination=result.termination.value,
            message=result.message,
            n_iter=result.n_iter,
            rho=None,
            error=None,
        )
    eval_point = result.theta_hat if design.rho_at_estimate else truth
    mapping = "mem" if m else "em"
    rho = jacobian_analytic(mapping, data, labeled, eval_point).spectral_radius
    aligned = align_components(result.theta_hat, truth)
    error = aligned.pack() - truth.pack()
    return RepRecord(
        cell_index=cell_index,
        rep=rep,
        alpha=alpha,
        label_frac=label_frac,
        failed=False,
        termination=result.termination.value,
        message="",
        n_iter=result.n_iter,
        rho=float(rho),
        error=tuple(float(e) for e in error),
    )


@dataclass(frozen=True)
class CellResult:
    alpha: float
    label_frac: float
    n_reps: int
    n_failed: int
    failed: bool
    rmse: float
    mean_rho: float
    mean_n_iter: float
    rep_details: tuple | None = None

    def to_dict(self, include_reps=False):
        d = {
            "alpha": self.alpha,
            "label_frac": self.label_frac,
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
            "failed": self.failed,
            "rmse": self.rmse,
            "mean_rho": self.mean_rho,
            "mean_n_iter": self.mean_n_iter,
        }
        if include_reps and self.rep_details is not None:
            d["replications"] = [dataclasses.asdict(r) for r in self.rep_details]
        return d


def aggregate(records, keep_rep_details: bool = False) -> CellResult:
    """Reduce one cell's replication records.

    RMSE is the mean over packed coordinates of the per-coordinate root mean
    square error across successful replications. Failed replications are
    excluded and counted; the cell is flagged failed when more than 10% fail.
    """
    records = list(records)
    if not records:
        raise EmptyCellError("no replication records")
    ok = [r for r in records if not r.failed]
    if not ok:
        raise EmptyCellError(
            f"all {len(records)} replications failed in cell "
            f"(alpha={records[0].alpha}, label_frac={records[0].label_frac})"
        )
    errs = np.asarray([r.error for r in ok])
    rmse = float(np.mean(np.sqrt(np.mean(errs**2, axis=0))))
    n_failed = len(records) - len(ok)
    return CellResult(
        alpha=records[0].alpha,
        label_frac=records[0].label_frac,
        n_reps=len(records),
        n_failed=n_failed,
        failed=n_failed > 0.1 * len(records),
        rmse=rmse,
        mean_rho=float(np.mean([r.rho for r in ok])),
        mean_n_iter=float(np.mean([r.n_iter for r in ok])),
        rep_details=tuple(records) if keep_rep_details else None,
    )


@dataclass(frozen=True)
class ExperimentReport:
    design: SimDesign
    cells: tuple
    stopping_rule: str = STOPPING_RULE
    init_rule: str = INIT_RULE
    package_version: str = PACKAGE_VERSION
    backend: str = _backend.backend_name

    def cell(self, alpha, label_frac):
        for c in self.cells:
            if c.alpha == alpha and c.label_frac == label_frac:
                return c
        raise KeyError(f"no cell ({alpha}, {label_frac})")

    def cells_csv_text(self):
        lines = ["alpha,label_frac,rmse,mean_rho,mean_n_iter,n_failed"]
        for c in self.cells:
            lines.append(
                ",".join(
                    [
                        format_float(c.alpha),
                        format_float(c.label_frac),
                        format_float(c.rmse),
                        format_float(c.mean_rho),
                        format_float(c.mean_n_iter),
                        str(c.n_failed),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self, include_reps=False):
        return {
            "design": self.design.to_dict(),
            "stopping_rule": self.stopping_rule,
            "init_rule": self.init_rule,
            "package_version": self.package_version,
            "backend": self.backend,
            "cells": [c.to_dict(include_reps=include_reps) for c in self.cells],
        }

    def write_csv(self, path):
        atomic_write_text(path, self.cells_csv_text())

    def write_json(self, path, include_reps=False):
        write_json_atomic(path, self.to_json_dict(include_reps=include_reps))


def _run_cell(design: SimDesign, cell_index: int, keep_rep_details: bool) -> CellResult:
    records = [run_replication(design, cell_index, rep) for rep in range(design.reps)]
    return aggregate(records, keep_rep_details=keep_rep_details)


def resolve_workers(workers=None) -> int:
    """Worker count: explicit argument, else RAREMIX_WORKERS, else 1."""
    if workers is None:
        workers = int(os.environ.get("RAREMIX_WORKERS", "1"))
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    return workers


def run_experiment(
    design: SimDesign,
    workers: int | None = None,
    keep_rep_details: bool = False,
    progress=None,
) -> ExperimentReport:
    """Run every grid cell. ``workers > 1`` distributes cells over processes;
    results are identical to the serial run (per-cell counter seeds)."""
    workers = resolve_workers(workers)
    indices = range(len(design.cells()))
    if workers == 1:
        cells = []
        for i in indices:
            cells.append(_run_cell(design, i, keep_rep_details))
            if progress is not None:
                progress(i + 1, len(design.cells()))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(
                pool.map(
                    _run_cell,
                    [design] * len(design.cells()),
                    indices,
                    [keep_rep_details] * len(design.cells()),
                )
            )
    return ExperimentReport(design=design, cells=tuple(cells))

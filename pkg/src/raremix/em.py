"""EM and mixed-EM fixed-point mappings and the iterate-to-convergence driver.

The mixture is fit by iterating a mapping on the packed parameter vector:
``em_step`` uses unlabeled data only, ``mem_step`` pools soft responsibilities
from unlabeled rows with hard labels from labeled rows. Both center the
covariance updates at the INPUT means (the gradient-condition form of the
update), which is the mapping whose Jacobian the contraction diagnostics
analyze; recentering at the fresh means would be a different mapping.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._backend import em_accumulate
from .core import (
    Dataset,
    LabeledDataset,
    MixtureParams,
    gaussian_logpdf,
    mixture_logpdf,
    unvech,
    vech_indices,
)
from .exceptions import (
    ConfigError,
    EmptyComponentError,
    InitializationError,
    SingularCovarianceError,
)
from .numerics import precision_matrix

# Total component weight at or below this fraction of the sample counts as a
# collapsed component rather than underflow noise.
COLLAPSE_FRACTION = 1e-300


class Termination(enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITER_REACHED = "max_iter_reached"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class FitConfig:
    """Stopping rule and numerical options for :func:`fit`.

    ``tol`` applies to the max absolute componentwise change of the packed
    parameter vector between successive iterates. ``ridge`` (off by default)
    adds ridge * I to each updated covariance before the definiteness check.
    """

    max_iter: int = 5000
    tol: float = 1e-6
    ridge: float = 0.0
    record_trace: bool = False

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.ridge < 0:
            raise ConfigError(f"ridge must be nonnegative, got {self.ridge}")


@dataclass(frozen=True)
class FitResult:
    theta_hat: MixtureParams
    n_iter: int
    converged: bool
    termination: Termination
    loglik: float | None = None
    loglik_trace: np.ndarray | None = None
    theta_trace: tuple | None = None
    message: str = ""


@dataclass(frozen=True)
class LabeledStats:
    """Sufficient statistics of the labeled subset, computed once per fit."""

    m: int
    w1: float
    w0: float
    sx1: np.ndarray
    sx0: np.ndarray
    sxx1: np.ndarray
    sxx0: np.ndarray

    @classmethod
    def from_dataset(cls, labeled: LabeledDataset | None, p: int):
        if labeled is None or labeled.m == 0:
            z = np.zeros(p)
            zz = np.zeros((p, p))
            return cls(m=0, w1=0.0, w0=0.0, sx1=z, sx0=z, sxx1=zz, sxx0=zz)
        y = labeled.y
        x = labeled.x
        w1 = float(y.sum())
        sx1 = y @ x
        sxx1 = (x * y[:, None]).T @ x
        sx0 = x.sum(axis=0) - sx1
        sxx0 = x.T @ x - sxx1
        return cls(
            m=labeled.m,
            w1=w1,
            w0=labeled.m - w1,
            sx1=sx1,
            sx0=sx0,
            sxx1=sxx1,
            sxx0=sxx0,
        )

    def second_moment_about(self, mu, k):
        """sum_i w_i (x_i - mu)(x_i - mu)^T over the class-k labeled rows."""
        if k == 1:
            w, sx, sxx = self.w1, self.sx1, self.sxx1
        else:
            w, sx, sxx = self.w0, self.sx0, self.sxx0
        return sxx - np.outer(mu, sx) - np.outer(sx, mu) + w * np.outer(mu, mu)


def _step(data: Dataset, stats: LabeledStats, params: MixtureParams, ridge: float):
    """Apply the mapping once. Returns (new params, unlabeled loglik at input)."""
    p = params.p
    prec0 = precision_matrix(params.chol0)
    prec1 = precision_matrix(params.chol1)
    loglik_u, s1, sx1, sv1, s0, sx0, sv0 = em_accumulate(
        data.x,
        float(np.log(params.alpha)),
        float(np.log1p(-params.alpha)),
        params.mu0,
        prec0,
        params.chol0.logdet,
        params.mu1,
        prec1,
        params.chol1.logdet,
    )
    t1 = s1 + stats.w1
    t0 = s0 + stats.w0
    total = data.n + stats.m
    if t1 <= COLLAPSE_FRACTION * total:
        raise EmptyComponentError(f"component 1 weight collapsed (sum = {t1:.3e})")
    if t0 <= COLLAPSE_FRACTION * total:
        raise EmptyComponentError(f"component 0 weight collapsed (sum = {t0:.3e})")
    alpha_new = t1 / total
    mu1_new = (sx1 + stats.sx1) / t1
    mu0_new = (sx0 + stats.sx0) / t0
    sigma1_new = (unvech(sv1) + stats.second_moment_about(params.mu1, 1)) / t1
    sigma0_new = (unvech(sv0) + stats.second_moment_about(params.mu0, 0)) / t0
    if ridge:
        sigma1_new = sigma1_new + ridge * np.eye(p)
        sigma0_new = sigma0_new + ridge * np.eye(p)
    new = MixtureParams(
        alpha=alpha_new, mu0=mu0_new, sigma0=sigma0_new, mu1=mu1_new, sigma1=sigma1_new
    )
    return new, loglik_u


def em_step(data: Dataset, params: MixtureParams, ridge: float = 0.0) -> MixtureParams:
    """One step of the unlabeled-data mapping.

    Weight updates use the posterior responsibilities at ``params``; the
    covariance updates are centered at the input means.
    """
    stats = LabeledStats.from_dataset(None, params.p)
    new, _ = _step(data, stats, params, ridge)
    return new


def mem_step(
    data: Dataset, labeled: LabeledDataset | None, params: MixtureParams, ridge: float = 0.0
) -> MixtureParams:
    """One step of the pooled mapping: soft unlabeled plus hard labeled terms.

    With an empty labeled set this takes exactly the same arithmetic path as
    :func:`em_step`.
    """
    stats = LabeledStats.from_dataset(labeled, params.p)
    new, _ = _step(data, stats, params, ridge)
    return new


def loglik(data: Dataset, params: MixtureParams) -> float:
    """Unlabeled mixture log-likelihood."""
    if data.n == 0:
        return 0.0
    return float(np.sum(mixture_logpdf(data.x, params)))


def _labeled_loglik(labeled: LabeledDataset | None, params: MixtureParams) -> float:
    if labeled is None or labeled.m == 0:
        return 0.0
    y = labeled.y
    lp0 = np.atleast_1d(gaussian_logpdf(labeled.x, params.mu0, factor=params.chol0))
    lp1 = np.atleast_1d(gaussian_logpdf(labeled.x, params.mu1, factor=params.chol1))
    dens = float(np.sum(y * lp1 + (1.0 - y) * lp0))
    w1 = float(y.sum())
    bern = w1 * float(np.log(params.alpha)) + (labeled.m - w1) * float(
        np.log1p(-params.alpha)
    )
    return dens + bern


def loglik_semi(data: Dataset, labeled: LabeledDataset | None, params: MixtureParams) -> float:
    """Joint log-likelihood: unlabeled mixture term plus labeled component and
    Bernoulli terms. Reduces to :func:`loglik` when the labeled set is empty."""
    return loglik(data, params) + _labeled_loglik(labeled, params)


def fit(
    data: Dataset,
    labeled: LabeledDataset | None = None,
    theta0: MixtureParams | None = None,
    config: FitConfig | None = None,
) -> FitResult:
    """Iterate the mapping from ``theta0`` until the packed parameter change
    drops to ``config.tol`` or ``config.max_iter`` is reached.

    ``n_iter`` counts executed steps, including the one that met tolerance.
    On a numerical failure the result carries the last valid iterate. The
    log-likelihood trace, when recorded, evaluates each iterate (including
    the final one), so it has ``n_iter + 1`` entries.
    """
    if theta0 is None:
        raise ValueError("theta0 is required")
    if config is None:
        config = FitConfig()
    stats = LabeledStats.from_dataset(labeled, theta0.p)
    params = theta0
    packed = params.pack()
    trace = [] if config.record_trace else None
    thetas = [params] if config.record_trace else None
    n_iter = 0
    termination = Termination.MAX_ITER_REACHED
    message = ""
    for t in range(1, config.max_iter + 1):
        try:
            new, loglik_u = _step(data, stats, params, config.ridge)
        except (SingularCovarianceError, EmptyComponentError) as exc:
            termination = Termination.NUMERICAL_FAILURE
            message = str(exc)
            break
        if trace is not None:
            trace.append(loglik_u + _labeled_loglik(labeled, params))
            thetas.append(new)
        new_packed = new.pack()
        delta = float(np.max(np.abs(new_packed - packed)))
        params = new
        packed = new_packed
        n_iter = t
        if delta <= config.tol:
            termination = Termination.TOLERANCE_MET
            break
    if trace is not None:
        trace.append(loglik_semi(data, labeled, params))
    final_ll = loglik_semi(data, labeled, params) if termination != Termination.NUMERICAL_FAILURE else None
    return FitResult(
        theta_hat=params,
        n_iter=n_iter,
        converged=termination == Termination.TOLERANCE_MET,
        termination=termination,
        loglik=final_ll,
        loglik_trace=np.asarray(trace) if trace is not None else None,
        theta_trace=tuple(thetas) if thetas is not None else None,
        message=message,
    )


def init_true_perturbed(
    theta_true: MixtureParams,
    mean_scale: float = 0.5,
    var_scale: float = 0.2,
    alpha0: float | None = None,
    rng: np.random.Generator | None = None,
) -> MixtureParams:
    """Truth plus uniform noise: means shifted by U(-mean_scale, mean_scale),
    covariance diagonals by U(-var_scale, var_scale); ``alpha0`` overrides the
    starting mixing weight (default: keep the true one).

    The covariance perturbation is retried with halved scale until the result
    is positive definite.
    """
    if rng is None:
        rng = np.random.default_rng()
    p = theta_true.p
    alpha = theta_true.alpha if alpha0 is None else float(alpha0)
    mu0 = theta_true.mu0 + rng.uniform(-mean_scale, mean_scale, size=p)
    mu1 = theta_true.mu1 + rng.uniform(-mean_scale, mean_scale, size=p)
    bump0 = rng.uniform(-var_scale, var_scale, size=p)
    bump1 = rng.uniform(-var_scale, var_scale, size=p)
    scale = 1.0
    for _ in range(8):
        try:
            return MixtureParams(
                alpha=alpha,
                mu0=mu0,
                sigma0=theta_true.sigma0 + np.diag(scale * bump0),
                mu1=mu1,
                sigma1=theta_true.sigma1 + np.diag(scale * bump1),
            )
        except SingularCovarianceError:
            scale *= 0.5
    raise InitializationError("perturbed covariances remained indefinite after backoff")


def init_labeled_moments(labeled: LabeledDataset) -> MixtureParams:
    """Class-wise moments of the labeled subset; requires both classes."""
    y = labeled.y
    m1 = int(y.sum())
    m0 = labeled.m - m1
    if m0 == 0 or m1 == 0:
        raise InitializationError(
            f"labeled moments need both classes, got {m1} positives of {labeled.m}"
        )
    x1 = labeled.x[y == 1.0]
    x0 = labeled.x[y == 0.0]
    mu1 = x1.mean(axis=0)
    mu0 = x0.mean(axis=0)
    try:
        return MixtureParams(
            alpha=m1 / labeled.m,
            mu0=mu0,
            sigma0=(x0 - mu0).T @ (x0 - mu0) / m0,
            mu1=mu1,
            sigma1=(x1 - mu1).T @ (x1 - mu1) / m1,
        )
    except SingularCovarianceError as exc:
        raise InitializationError(f"labeled class moments are degenerate: {exc}") from exc


def init_quantile_split(data: Dataset, alpha0: float = 0.1) -> MixtureParams:
    """Assign the lowest-``alpha0`` quantile of a 1-D projection to class 1
    and take per-side moments; the projection is the leading principal axis."""
    if not 0.0 < alpha0 < 1.0:
        raise InitializationError(f"quantile fraction must lie in (0,1), got {alpha0}")
    n, p = data.n, data.p
    if n < 2:
        raise InitializationError("quantile split needs at least 2 rows")
    x = data.x
    center = x.mean(axis=0)
    if p == 1:
        score = (x - center)[:, 0]
    else:
        cov = (x - center).T @ (x - center) / n
        _, vecs = np.linalg.eigh(cov)
        score = (x - center) @ vecs[:, -1]
    cut = np.quantile(score, alpha0)
    low = score <= cut
    if not (low.any() and (~low).any()):
        raise InitializationError("quantile split left one side empty")
    x1 = x[low]
    x0 = x[~low]
    mu1 = x1.mean(axis=0)
    mu0 = x0.mean(axis=0)
    try:
        return MixtureParams(
            alpha=alpha0,
            mu0=mu0,
            sigma0=(x0 - mu0).T @ (x0 - mu0) / x0.shape[0],
            mu1=mu1,
            sigma1=(x1 - mu1).T @ (x1 - mu1) / x1.shape[0],
        )
    except SingularCovarianceError as exc:
        raise InitializationError(f"quantile-side moments are degenerate: {exc}") from exc


def init_strategy(
    data: Dataset | None,
    labeled: LabeledDataset | None,
    kind: str,
    rng_seed=None,
    theta_true: MixtureParams | None = None,
    mean_scale: float = 0.5,
    var_scale: float = 0.2,
    alpha0: float | None = None,
) -> MixtureParams:
    """Dispatch over the named initialization strategies."""
    if kind == "true_perturbed":
        if theta_true is None:
            raise InitializationError("true_perturbed requires theta_true")
        rng = np.random.default_rng(rng_seed)
        return init_true_perturbed(
            theta_true, mean_scale=mean_scale, var_scale=var_scale, alpha0=alpha0, rng=rng
        )
    if kind == "labeled_moments":
        if labeled is None or labeled.m == 0:
            raise InitializationError("labeled_moments requires labeled data")
        return init_labeled_moments(labeled)
    if kind == "quantile_split":
        if data is None or data.n == 0:
            raise InitializationError("quantile_split requires unlabeled data")
        return init_quantile_split(data, alpha0=0.1 if alpha0 is None else alpha0)
    raise InitializationError(f"unknown initialization kind {kind!r}")

"""Jacobians of the fixed-point mappings and their small-``alpha`` limits.

The packed parameter order (alpha, mu0, vech(sigma0), mu1, vech(sigma1))
induces a 5x5 block grid on every q x q matrix here. ``jacobian_analytic``
differentiates the mapping exactly through the responsibilities;
``jacobian_fd`` is the central-difference cross-check. ``limit_matrix_M`` and
``limit_matrix_Mstar`` assemble the closed-form limits of those Jacobians as
the rare-class weight tends to zero, built from two ingredient families: the
squared-density-ratio integrals (a ratio-Gaussian in closed form) and
fourth-order Gaussian moment blocks (Isserlis expansion, exact).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (
    Dataset,
    LabeledDataset,
    MixtureParams,
    duplication_matrix,
    posterior_logodds,
    vech,
    vech_indices,
)
from .em import LabeledStats, em_step, mem_step
from .exceptions import DivergingIntegralError, NumericalError, SingularCovarianceError
from .numerics import cholesky, precision_matrix, spd_solve, spectral_radius

BLOCK_NAMES = ("alpha", "mu0", "sigma0", "mu1", "sigma1")


def block_slices(p):
    """Packed-index slices of the five parameter blocks for dimension ``p``."""
    r = p * (p + 1) // 2
    edges = np.cumsum([1, p, r, p, r])
    starts = np.concatenate(([0], edges[:-1]))
    return {
        name: slice(int(a), int(b)) for name, a, b in zip(BLOCK_NAMES, starts, edges)
    }


@dataclass(frozen=True)
class JacobianReport:
    jac: np.ndarray
    eval_point: MixtureParams
    method: str
    spectral_radius: float

    def block(self, row: str, col: str):
        s = block_slices(self.eval_point.p)
        return self.jac[s[row], s[col]]


def _mapping_callable(mapping, data, labeled, p):
    if callable(mapping):
        return mapping
    if mapping == "em":
        return lambda v: em_step(data, MixtureParams.unpack(v, p)).pack()
    if mapping == "mem":
        return lambda v: mem_step(data, labeled, MixtureParams.unpack(v, p)).pack()
    raise ValueError(f"mapping must be 'em', 'mem', or a callable, got {mapping!r}")


def jacobian_fd(
    mapping,
    data: Dataset | None = None,
    labeled: LabeledDataset | None = None,
    theta: MixtureParams | None = None,
    h: float = 1e-5,
) -> JacobianReport:
    """Central-difference Jacobian of a mapping on packed vectors.

    ``mapping`` is ``"em"``, ``"mem"``, or any callable on packed vectors;
    the step for coordinate j is ``h * max(1, |theta_j|)``.
    """
    if theta is None:
        raise ValueError("theta is required")
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    fn = _mapping_callable(mapping, data, labeled, theta.p)
    base = theta.pack()
    q = base.shape[0]
    jac = np.empty((q, q))
    for j in range(q):
        step = h * max(1.0, abs(base[j]))
        plus = base.copy()
        minus = base.copy()
        plus[j] += step
        minus[j] -= step
        try:
            jac[:, j] = (np.asarray(fn(plus)) - np.asarray(fn(minus))) / (2.0 * step)
        except Exception as exc:
            raise NumericalError(
                f"finite-difference column {j} failed: {exc}", coordinate=j
            ) from exc
    return JacobianReport(
        jac=jac, eval_point=theta, method="central_fd", spectral_radius=spectral_radius(jac)
    )


def jacobian_analytic(
    mapping,
    data: Dataset | None = None,
    labeled: LabeledDataset | None = None,
    theta: MixtureParams | None = None,
) -> JacobianReport:
    """Exact Jacobian of the mapping at ``theta``.

    Differentiates through the responsibilities
    (d pi / d theta = pi (1 - pi) * psi, with psi the log-odds gradient) and
    applies the quotient rule through the weighted means and input-centered
    second moments. Labeled rows contribute constants to the numerators and
    denominators plus the recentering terms of the covariance blocks.
    """
    if theta is None:
        raise ValueError("theta is required")
    if mapping not in ("em", "mem"):
        raise ValueError(f"mapping must be 'em' or 'mem', got {mapping!r}")
    if data is None:
        raise ValueError("data is required")
    p = theta.p
    q = theta.q
    stats = (
        LabeledStats.from_dataset(labeled, p)
        if mapping == "mem"
        else LabeledStats.from_dataset(None, p)
    )
    sl = block_slices(p)
    rows, cols = vech_indices(p)
    diag = (rows == cols).astype(float)
    half = np.where(diag == 1.0, 0.5, 1.0)

    x = data.x
    n = data.n
    total = n + stats.m
    prec0 = precision_matrix(theta.chol0)
    prec1 = precision_matrix(theta.chol1)
    pi = expit(posterior_logodds(x, theta)) if n else np.zeros(0)
    w = pi * (1.0 - pi)
    d0 = x - theta.mu0
    d1 = x - theta.mu1
    g0 = d0 @ prec0
    g1 = d1 @ prec1

    psi = np.empty((n, q))
    psi[:, 0] = 1.0 / (theta.alpha * (1.0 - theta.alpha))
    psi[:, sl["mu0"]] = -g0
    psi[:, sl["sigma0"]] = -half * (g0[:, rows] * g0[:, cols] - prec0[rows, cols])
    psi[:, sl["mu1"]] = g1
    psi[:, sl["sigma1"]] = half * (g1[:, rows] * g1[:, cols] - prec1[rows, cols])
    grad = w[:, None] * psi

    t1 = float(pi.sum()) + stats.w1
    t0 = float((1.0 - pi).sum()) + stats.w0
    m1 = (pi @ x + stats.sx1) / t1
    m0 = ((1.0 - pi) @ x + stats.sx0) / t0
    fs1 = ((d1 * pi[:, None]).T @ d1 + stats.second_moment_about(theta.mu1, 1)) / t1
    fs0 = ((d0 * (1.0 - pi)[:, None]).T @ d0 + stats.second_moment_about(theta.mu0, 0)) / t0

    jac = np.zeros((q, q))
    jac[0, :] = grad.sum(axis=0) / total
    jac[sl["mu0"], :] = -((x - m0).T @ grad) / t0
    jac[sl["mu1"], :] = ((x - m1).T @ grad) / t1
    v0c = d0[:, rows] * d0[:, cols] - vech(fs0)
    v1c = d1[:, rows] * d1[:, cols] - vech(fs1)
    jac[sl["sigma0"], :] = -(v0c.T @ grad) / t0
    jac[sl["sigma1"], :] = (v1c.T @ grad) / t1

    # Input-centering: the second-moment blocks depend on the centering mean
    # directly, not only through the responsibilities.
    b0 = m0 - theta.mu0
    b1 = m1 - theta.mu1
    dir0 = np.zeros((rows.shape[0], p))
    dir1 = np.zeros((rows.shape[0], p))
    for ell in range(p):
        dir0[:, ell] = -((rows == ell) * b0[cols] + (cols == ell) * b0[rows])
        dir1[:, ell] = -((rows == ell) * b1[cols] + (cols == ell) * b1[rows])
    jac[sl["sigma0"], sl["mu0"]] += dir0
    jac[sl["sigma1"], sl["mu1"]] += dir1

    return JacobianReport(
        jac=jac, eval_point=theta, method="analytic", spectral_radius=spectral_radius(jac)
    )


def gaussian_ratio_integrals(theta: MixtureParams):
    """Integrals of phi1^2/phi0 against (x - mu1) moments, in closed form.

    The squared-over-single density ratio is c * phi_{m,S} with
    S = (2 inv(sigma1) - inv(sigma0))^{-1}; returns the pair
    (-c (m - mu1), -c (S + (m - mu1)(m - mu1)^T - sigma1)). Raises
    DivergingIntegralError when 2*inv(sigma1) - inv(sigma0) is not positive
    definite, in which case the defining integrals are infinite.
    """
    prec0 = precision_matrix(theta.chol0)
    prec1 = precision_matrix(theta.chol1)
    a = 2.0 * prec1 - prec0
    a = 0.5 * (a + a.T)
    try:
        fa = cholesky(a)
    except SingularCovarianceError as exc:
        raise DivergingIntegralError(
            "ratio integrals diverge: 2*inv(sigma1) - inv(sigma0) is not positive definite"
        ) from exc
    s = precision_matrix(fa)
    center = spd_solve(fa, 2.0 * (prec1 @ theta.mu1) - prec0 @ theta.mu0)
    quad = (
        center @ (a @ center)
        - 2.0 * theta.mu1 @ (prec1 @ theta.mu1)
        + theta.mu0 @ (prec0 @ theta.mu0)
    )
    log_c = 0.5 * quad + 0.5 * theta.chol0.logdet - 0.5 * fa.logdet - theta.chol1.logdet
    c = float(np.exp(log_c))
    shift = center - theta.mu1
    delta_mu1_alpha = -c * shift
    delta_sigma1_alpha = -c * (s + np.outer(shift, shift) - theta.sigma1)
    return delta_mu1_alpha, delta_sigma1_alpha


@dataclass(frozen=True)
class MomentBlocks:
    """Gaussian moment expectations entering the limit matrices (exact)."""

    delta_mu1_sigma0: np.ndarray
    delta_mu1_sigma1: np.ndarray
    delta_sigma1_mu0: np.ndarray
    delta_sigma1_mu1: np.ndarray
    delta_sigma1_sigma0: np.ndarray
    delta_sigma1_sigma1: np.ndarray


def gaussian_moment_blocks(theta: MixtureParams) -> MomentBlocks:
    """Isserlis evaluation of the third/fourth-order moment blocks.

    All expectations are over X ~ N(mu1, sigma1) with score vectors
    gamma_k = inv(sigma_k)(X - mu_k); the subtracted vech(sigma1) outer
    products are computed and subtracted explicitly rather than cancelled
    analytically. Sign factor per component: +1 for k=1, -1 for k=0.
    """
    p = theta.p
    r = p * (p + 1) // 2
    rows, cols = vech_indices(p)
    dup = duplication_matrix(p)
    sigma1 = theta.sigma1
    vh_sigma1 = vech(sigma1)
    out = {}
    for k, (mu_k, chol_k) in enumerate(((theta.mu0, theta.chol0), (theta.mu1, theta.chol1))):
        sign = 1.0 if k == 1 else -1.0
        prec_k = precision_matrix(chol_k)
        c_mat = sigma1 @ prec_k
        delta = theta.mu1 - mu_k
        u = prec_k @ delta

        # E[(X - mu1) vec(gamma_k gamma_k^T)^T]: only the odd-even pairings
        # survive, leaving u-weighted products of sigma1 inv(sigma_k).
        t4 = np.einsum("b,ac->abc", u, c_mat) + np.einsum("c,ab->abc", u, c_mat)
        t_flat = t4.transpose(0, 2, 1).reshape(p, p * p)
        out[f"delta_mu1_sigma{k}"] = sign * 0.5 * (t_flat @ dup)

        # E[vech((X-mu1)(X-mu1)^T) gamma_k^T] minus vech(sigma1) E[gamma_k]^T:
        # third central moments vanish, and the remaining term cancels against
        # the subtrahend, so the block is exactly zero for both k.
        e_term = np.outer(vh_sigma1, u)
        out[f"delta_sigma1_mu{k}"] = sign * (e_term - np.outer(vh_sigma1, u))

        # E[vech((X-mu1)(X-mu1)^T) vec(gamma_k gamma_k^T)^T] via Wick pairing,
        # minus vech(sigma1) vec(E[gamma_k gamma_k^T])^T.
        mid = prec_k @ sigma1 @ prec_k + np.outer(u, u)
        u4 = (
            np.einsum("ab,cd->abcd", sigma1, mid)
            + np.einsum("ac,bd->abcd", c_mat, c_mat)
            + np.einsum("ad,bc->abcd", c_mat, c_mat)
        )
        u_rows = u4[rows, cols]
        u_flat = u_rows.transpose(0, 2, 1).reshape(r, p * p)
        sub = np.outer(vh_sigma1, mid.flatten(order="F"))
        out[f"delta_sigma1_sigma{k}"] = 0.5 * ((u_flat - sub) @ dup)
    return MomentBlocks(**out)


@dataclass(frozen=True)
class LimitMatrix:
    """Closed-form limit of a mapping Jacobian, with named block access."""

    mat: np.ndarray
    kind: str
    p: int
    kappa: float | None = None

    def block(self, row: str, col: str):
        s = block_slices(self.p)
        return self.mat[s[row], s[col]]

    @property
    def spectral_radius(self):
        return spectral_radius(self.mat)


def limit_matrix_M(theta: MixtureParams) -> LimitMatrix:
    """Limit of the unlabeled-mapping Jacobian as the rare-class weight
    vanishes (component 1 rare), assembled blockwise from the ratio integrals
    and moment blocks.

    Requires 2*inv(sigma1) - inv(sigma0) positive definite.
    """
    p = theta.p
    q = theta.q
    sl = block_slices(p)
    delta_mu1_alpha, delta_sigma1_alpha = gaussian_ratio_integrals(theta)
    blocks = gaussian_moment_blocks(theta)
    prec0 = precision_matrix(theta.chol0)
    d = theta.mu1 - theta.mu0

    mat = np.zeros((q, q))
    mat[0, 0] = 1.0
    mat[sl["mu0"], 0] = theta.mu0 - theta.mu1
    mat[sl["sigma0"], 0] = -vech(theta.sigma1 - theta.sigma0 + np.outer(d, d))
    mat[sl["mu1"], 0] = delta_mu1_alpha
    mat[sl["mu1"], sl["mu0"]] = -(theta.sigma1 @ prec0)
    mat[sl["mu1"], sl["sigma0"]] = blocks.delta_mu1_sigma0
    mat[sl["mu1"], sl["mu1"]] = np.eye(p)
    mat[sl["mu1"], sl["sigma1"]] = blocks.delta_mu1_sigma1
    mat[sl["sigma1"], 0] = vech(delta_sigma1_alpha)
    mat[sl["sigma1"], sl["mu0"]] = blocks.delta_sigma1_mu0
    # The sigma-column blocks of this row follow the same component-indexed
    # sign rule as the mu1 row; locked by the population finite-difference
    # regression test, and irrelevant to the spectrum (block triangular).
    mat[sl["sigma1"], sl["sigma0"]] = -blocks.delta_sigma1_sigma0
    mat[sl["sigma1"], sl["mu1"]] = blocks.delta_sigma1_mu1
    mat[sl["sigma1"], sl["sigma1"]] = blocks.delta_sigma1_sigma1
    return LimitMatrix(mat=mat, kind="M", p=p, kappa=None)


def limit_matrix_Mstar(theta: MixtureParams, kappa: float) -> LimitMatrix:
    """Limit of the pooled-mapping Jacobian with labeled/unlabeled ratio
    ``kappa``: every surviving block is the matching block of M times
    1/(1+kappa); the alpha-column blocks of the component-1 rows vanish."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    base = limit_matrix_M(theta)
    sl = block_slices(theta.p)
    scale = 1.0 / (1.0 + kappa)
    mat = base.mat * scale
    mat[sl["mu1"], 0] = 0.0
    mat[sl["sigma1"], 0] = 0.0
    return LimitMatrix(mat=mat, kind="Mstar", p=theta.p, kappa=float(kappa))


def block_spectral_radius_check(theta: MixtureParams, kappa: float) -> float:
    """Spectral radius of the (mu1, sigma1) sub-block grid scaled by
    1/(1+kappa) -- the quantity governing convergence of the rare-component
    coordinates."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    p = theta.p
    blocks = gaussian_moment_blocks(theta)
    top = np.hstack([np.eye(p), blocks.delta_mu1_sigma1])
    bottom = np.hstack([blocks.delta_sigma1_mu1, -blocks.delta_sigma1_sigma1])
    grid = np.vstack([top, bottom]) / (1.0 + kappa)
    return spectral_radius(grid)


def min_contracting_kappa(theta: MixtureParams, tol: float = 1e-10) -> float:
    """Smallest kappa for which :func:`block_spectral_radius_check` drops
    below 1, by bisection. Returns 0.0 when already contracting at kappa=0."""
    r0 = block_spectral_radius_check(theta, 0.0)
    if r0 < 1.0:
        return 0.0
    lo, hi = 0.0, r0
    while block_spectral_radius_check(theta, hi) >= 1.0:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if block_spectral_radius_check(theta, mid) < 1.0:
            hi = mid
        else:
            lo = mid
    return hi

"""Parameter packing, half-vectorization, Gaussian densities, and posteriors.

The mixture has two Gaussian components: component 1 with weight ``alpha``
(the rare class in the intended regime) and component 0 with weight
``1 - alpha``. Parameters travel either as a :class:`MixtureParams` value or
packed into a flat vector ``(alpha, mu0, vech(sigma0), mu1, vech(sigma1))``
of length ``q = p^2 + 3p + 1``; the packing order matches the block order
used by the limit-matrix diagnostics so Jacobian blocks are index-aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .exceptions import SchemaError
from .numerics import CholFactor, check_symmetric, cholesky

LOG_2PI = float(np.log(2.0 * np.pi))


def vech_indices(p):
    """Row/column index arrays for the lexicographic (i, j), i <= j ordering."""
    return np.triu_indices(p)


def vech(a, rtol=1e-10):
    """Half-vectorize a symmetric matrix: entries A_ij for i <= j, lexicographic.

    Input symmetry is checked to relative tolerance ``rtol``.
    """
    a = check_symmetric(a, rtol=rtol)
    rows, cols = vech_indices(a.shape[0])
    return a[rows, cols].copy()


def unvech(v):
    """Inverse of :func:`vech`: rebuild the full symmetric matrix."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"vech vector must be 1-D, got shape {v.shape}")
    r = v.shape[0]
    p = int(round((np.sqrt(8 * r + 1) - 1) / 2))
    if p * (p + 1) // 2 != r:
        raise ValueError(f"length {r} is not a triangular number")
    out = np.zeros((p, p))
    rows, cols = vech_indices(p)
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def duplication_matrix(p):
    """The 0/1 matrix D with D vech(A) = vec(A) for symmetric A, vec column-major.

    Shape (p^2, p(p+1)/2); each row has exactly one 1.
    """
    if p < 1:
        raise ValueError(f"dimension must be >= 1, got {p}")
    r = p * (p + 1) // 2
    half_index = np.zeros((p, p), dtype=int)
    rows, cols = vech_indices(p)
    half_index[rows, cols] = np.arange(r)
    half_index[cols, rows] = half_index[rows, cols]
    d = np.zeros((p * p, r))
    for c in range(p):
        for r_ in range(p):
            d[c * p + r_, half_index[r_, c]] = 1.0
    return d


def _as_matrix(x, p, name="x"):
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim == 1:
        if p == 1:
            x = x[:, None]
        elif x.shape[0] == p:
            x = x[None, :]
        else:
            raise ValueError(f"{name} has shape {x.shape}, expected (n, {p})")
    if x.ndim != 2 or x.shape[1] != p:
        raise ValueError(f"{name} has shape {x.shape}, expected (n, {p})")
    return x


@dataclass(frozen=True)
class Dataset:
    """Unlabeled observations, one row per point. ``n`` may be zero."""

    x: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-D (n, p), got shape {x.shape}")
        if x.size and not np.all(np.isfinite(x)):
            raise ValueError("x has nonfinite entries")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    """Observations with observed binary responses; ``m = 0`` means none."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        y = np.asarray(self.y)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-D (m, p), got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({x.shape[0]},)")
        if x.size and not np.all(np.isfinite(x)):
            raise ValueError("x has nonfinite entries")
        yf = np.ascontiguousarray(y, dtype=float)
        if y.size and not np.all((yf == 0.0) | (yf == 1.0)):
            raise ValueError("y entries must be 0 or 1")
        x.setflags(write=False)
        yf.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", yf)

    @classmethod
    def empty(cls, p):
        return cls(x=np.zeros((0, p)), y=np.zeros(0))

    @property
    def m(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def n_positive(self):
        return float(self.y.sum())


@dataclass(frozen=True)
class MixtureParams:
    """Two-component Gaussian mixture parameters.

    ``alpha`` is the weight of component 1; both covariance matrices must be
    symmetric positive definite (validated on construction, Cholesky factors
    cached on the instance).
    """

    alpha: float
    mu0: np.ndarray
    sigma0: np.ndarray
    mu1: np.ndarray
    sigma1: np.ndarray
    chol0: CholFactor = field(init=False, repr=False, compare=False)
    chol1: CholFactor = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float)).copy()
        mu1 = np.atleast_1d(np.asarray(self.mu1, dtype=float)).copy()
        sigma0 = np.atleast_2d(np.asarray(self.sigma0, dtype=float))
        sigma1 = np.atleast_2d(np.asarray(self.sigma1, dtype=float))
        p = mu0.shape[0]
        if mu0.ndim != 1 or mu1.shape != (p,):
            raise ValueError("mu0 and mu1 must be vectors of equal length")
        if sigma0.shape != (p, p) or sigma1.shape != (p, p):
            raise ValueError(f"covariances must be {p}x{p}")
        if not (np.all(np.isfinite(mu0)) and np.all(np.isfinite(mu1))):
            raise ValueError("means have nonfinite entries")
        sigma0 = 0.5 * (sigma0 + sigma0.T)
        sigma1 = 0.5 * (sigma1 + sigma1.T)
        chol0 = cholesky(sigma0)
        chol1 = cholesky(sigma1)
        for arr in (mu0, mu1, sigma0, sigma1):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma0)
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "sigma1", sigma1)
        object.__setattr__(self, "chol0", chol0)
        object.__setattr__(self, "chol1", chol1)

    @property
    def p(self):
        return self.mu0.shape[0]

    @property
    def q(self):
        """Packed length p^2 + 3p + 1."""
        p = self.p
        return p * p + 3 * p + 1

    def pack(self):
        """Flat vector (alpha, mu0, vech(sigma0), mu1, vech(sigma1))."""
        return np.concatenate(
            ([self.alpha], self.mu0, vech(self.sigma0), self.mu1, vech(self.sigma1))
        )

    @classmethod
    def unpack(cls, packed, p):
        """Rebuild from a packed vector of length p^2 + 3p + 1."""
        packed = np.asarray(packed, dtype=float)
        q = p * p + 3 * p + 1
        if packed.shape != (q,):
            raise ValueError(f"packed vector has shape {packed.shape}, expected ({q},)")
        r = p * (p + 1) // 2
        alpha = packed[0]
        mu0 = packed[1 : 1 + p]
        s0 = unvech(packed[1 + p : 1 + p + r])
        mu1 = packed[1 + p + r : 1 + 2 * p + r]
        s1 = unvech(packed[1 + 2 * p + r :])
        return cls(alpha=alpha, mu0=mu0, sigma0=s0, mu1=mu1, sigma1=s1)

    def swapped(self):
        """Relabel the components: alpha -> 1 - alpha, blocks 0 <-> 1."""
        return MixtureParams(
            alpha=1.0 - self.alpha,
            mu0=self.mu1,
            sigma0=self.sigma1,
            mu1=self.mu0,
            sigma1=self.sigma0,
        )

    def to_dict(self):
        return {
            "p": self.p,
            "alpha": self.alpha,
            "mu0": self.mu0.tolist(),
            "sigma0": self.sigma0.tolist(),
            "mu1": self.mu1.tolist(),
            "sigma1": self.sigma1.tolist(),
            "packed": self.pack().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        """Inverse of :meth:`to_dict`; validates the redundant packed vector."""
        try:
            params = cls(
                alpha=d["alpha"],
                mu0=d["mu0"],
                sigma0=d["sigma0"],
                mu1=d["mu1"],
                sigma1=d["sigma1"],
            )
        except KeyError as exc:
            raise SchemaError(f"parameter JSON missing field {exc}") from exc
        if "p" in d and int(d["p"]) != params.p:
            raise SchemaError(f"parameter JSON says p={d['p']} but arrays give p={params.p}")
        if "packed" in d:
            packed = np.asarray(d["packed"], dtype=float)
            if packed.shape != (params.q,) or not np.allclose(
                packed, params.pack(), rtol=1e-12, atol=1e-12
            ):
                raise SchemaError("parameter JSON packed vector disagrees with named blocks")
        return params


def gaussian_logpdf(x, mu, sigma=None, factor=None):
    """Log density of N(mu, sigma) at ``x``, via Cholesky (no explicit inverse).

    ``x`` may be a single point (p,) or a batch (n, p); pass ``factor`` to
    reuse a precomputed :class:`CholFactor`.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    p = mu.shape[0]
    if factor is None:
        factor = cholesky(np.atleast_2d(np.asarray(sigma, dtype=float)))
    if factor.dim != p:
        raise ValueError("mean and covariance dimensions disagree")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and (p > 1 or x.ndim == 0 or x.shape == (1,))
    pts = _as_matrix(x, p)
    z = solve_triangular(factor.lower, (pts - mu).T, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", z, z)
    out = -0.5 * (p * LOG_2PI + factor.logdet + quad)
    return float(out[0]) if single else out


def _component_logpdfs(x, params):
    x = _as_matrix(x, params.p)
    lp0 = gaussian_logpdf(x, params.mu0, factor=params.chol0)
    lp1 = gaussian_logpdf(x, params.mu1, factor=params.chol1)
    return np.atleast_1d(lp0), np.atleast_1d(lp1)


def mixture_logpdf(x, params):
    """Log of alpha*phi1(x) + (1-alpha)*phi0(x), stable two-term log-sum-exp."""
    lp0, lp1 = _component_logpdfs(x, params)
    out = np.logaddexp(
        np.log(params.alpha) + lp1, np.log1p(-params.alpha) + lp0
    )
    return float(out[0]) if out.shape == (1,) and np.asarray(x).ndim <= 1 else out


def mixture_density(x, params):
    """Mixture density in linear space (exponentiated on demand)."""
    return np.exp(mixture_logpdf(x, params))


def posterior_logodds(x, params):
    """log odds of component 1: log(alpha/(1-alpha)) + log phi1 - log phi0."""
    lp0, lp1 = _component_logpdfs(x, params)
    out = (np.log(params.alpha) - np.log1p(-params.alpha)) + lp1 - lp0
    return float(out[0]) if out.shape == (1,) and np.asarray(x).ndim <= 1 else out


def posterior(data, params):
    """Responsibilities P(Y=1 | X=x) as the logistic of the posterior log odds.

    ``data`` may be a :class:`Dataset` or a raw array.
    """
    x = data.x if isinstance(data, Dataset) else data
    return expit(posterior_logodds(x, params))

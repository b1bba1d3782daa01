"""Small dense linear algebra: Cholesky, SPD solves, eigenvalues, spectral radius.

Everything here wraps LAPACK via numpy.linalg and enforces the package's
contracts on top (symmetry checks, pivot reporting, dimension cap). Matrices
are small (q = p^2 + 3p + 1 stays far below the cap), so no attention is paid
to blocking or workspace reuse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError, SingularCovarianceError, SymmetryError

EIGEN_DIM_CAP = 200


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has nonfinite entries")
    return a


def check_symmetric(a, rtol=1e-10, name="matrix"):
    """Return ``a`` as a float array after verifying symmetry within ``rtol``."""
    a = _as_square(a, name)
    scale = max(1.0, float(np.max(np.abs(a))))
    gap = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if gap > rtol * scale:
        raise SymmetryError(f"{name} asymmetric: max |A - A^T| = {gap:.3e}")
    return a


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular Cholesky factor of a symmetric positive definite matrix."""

    lower: np.ndarray
    _logdet: float = field(init=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "_logdet", 2.0 * float(np.sum(np.log(np.diag(self.lower)))))
        self.lower.setflags(write=False)

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def logdet(self):
        """log det of the factored matrix."""
        return self._logdet

    def matrix(self):
        """Reconstruct the factored matrix L L^T."""
        return self.lower @ self.lower.T


def cholesky(a, rtol=1e-10):
    """Factor a symmetric positive definite matrix as L L^T.

    Raises SymmetryError on asymmetric input and SingularCovarianceError
    (carrying the failing pivot index) when a leading minor is not positive.
    """
    a = check_symmetric(a, rtol=rtol)
    a = 0.5 * (a + a.T)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pivot = _failing_pivot(a)
        raise SingularCovarianceError(
            f"matrix is not positive definite (pivot {pivot})", pivot=pivot
        ) from None
    return CholFactor(lower=lower)


def _failing_pivot(a):
    # Smallest k whose leading k+1 x k+1 minor fails to factor.
    for k in range(a.shape[0]):
        try:
            np.linalg.cholesky(a[: k + 1, : k + 1])
        except np.linalg.LinAlgError:
            return k
    return a.shape[0] - 1


def spd_solve(factor: CholFactor, b):
    """Solve A x = b given the Cholesky factor of A. ``b`` is a vector or matrix."""
    b = np.asarray(b, dtype=float)
    n = factor.dim
    lead = b.shape[0] if b.ndim else None
    if lead != n:
        raise ValueError(f"dimension mismatch: factor dim {n}, b leading dim {lead}")
    from scipy.linalg import solve_triangular

    y = solve_triangular(factor.lower, b, lower=True, check_finite=False)
    return solve_triangular(factor.lower, y, trans="T", lower=True, check_finite=False)


def precision_matrix(factor: CholFactor):
    """Inverse of the factored matrix, symmetrized."""
    inv = spd_solve(factor, np.eye(factor.dim))
    return 0.5 * (inv + inv.T)


def eigenvalues(a):
    """All eigenvalues of a square real matrix, as a complex array.

    Dimension is capped at EIGEN_DIM_CAP; LAPACK non-convergence is surfaced
    as NumericalError.
    """
    a = _as_square(a)
    if a.shape[0] > EIGEN_DIM_CAP:
        raise ValueError(f"dimension {a.shape[0]} exceeds eigen-solver cap {EIGEN_DIM_CAP}")
    if a.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed to converge: {exc}") from exc


def spectral_radius(a):
    """Maximum eigenvalue modulus of a square real matrix."""
    vals = eigenvalues(a)
    if vals.size == 0:
        return 0.0
    return float(np.max(np.abs(vals)))

"""NumPy implementation of the fused E-step accumulation pass.

Mirrors the compiled kernel in ``_kernels.pyx`` exactly in semantics; the two
may differ by floating-point summation order only. Selected by ``_backend``
when the extension is unavailable or RAREMIX_BACKEND=python.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

LOG_2PI = float(np.log(2.0 * np.pi))


def em_accumulate(x, log_alpha, log_1malpha, mu0, prec0, logdet0, mu1, prec1, logdet1):
    """One pass over unlabeled rows: mixture log-likelihood and weighted moments.

    Returns ``(loglik, s1, sum1_x, sum1_v, s0, sum0_x, sum0_v)`` where ``pi``
    is the responsibility of component 1 per row, ``s1 = sum pi``,
    ``sum1_x = sum pi * x``, ``sum1_v = sum pi * vech((x-mu1)(x-mu1)^T)``, and
    the ``0`` outputs use weights ``1 - pi`` centered at ``mu0``.
    """
    n, p = x.shape
    r = p * (p + 1) // 2
    if n == 0:
        return 0.0, 0.0, np.zeros(p), np.zeros(r), 0.0, np.zeros(p), np.zeros(r)
    d0 = x - mu0
    d1 = x - mu1
    q0 = np.einsum("ij,ij->i", d0 @ prec0, d0)
    q1 = np.einsum("ij,ij->i", d1 @ prec1, d1)
    lw0 = log_1malpha - 0.5 * (q0 + logdet0 + p * LOG_2PI)
    lw1 = log_alpha - 0.5 * (q1 + logdet1 + p * LOG_2PI)
    loglik = float(np.sum(np.logaddexp(lw1, lw0)))
    pi = expit(lw1 - lw0)
    om = 1.0 - pi
    rows, cols = np.triu_indices(p)
    v1 = d1[:, rows] * d1[:, cols]
    v0 = d0[:, rows] * d0[:, cols]
    return (
        loglik,
        float(pi.sum()),
        pi @ x,
        pi @ v1,
        float(om.sum()),
        om @ x,
        om @ v0,
    )

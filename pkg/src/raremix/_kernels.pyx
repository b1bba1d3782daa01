# Fused E-step accumulation pass. Semantics match _kernels_py.em_accumulate;
# keep the two in lockstep when editing either.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def em_accumulate(
    const double[:, ::1] x,
    double log_alpha,
    double log_1malpha,
    const double[::1] mu0,
    const double[:, ::1] prec0,
    double logdet0,
    const double[::1] mu1,
    const double[:, ::1] prec1,
    double logdet1,
):
    """One pass over unlabeled rows: mixture log-likelihood and weighted moments.

    Same contract as the NumPy fallback: returns
    (loglik, s1, sum1_x, sum1_v, s0, sum0_x, sum0_v) with vech entries in
    lexicographic (i, j), i <= j order.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = x.shape[1]
    cdef Py_ssize_t r = p * (p + 1) // 2
    cdef cnp.ndarray[double, ndim=1] sum1_x = np.zeros(p)
    cdef cnp.ndarray[double, ndim=1] sum0_x = np.zeros(p)
    cdef cnp.ndarray[double, ndim=1] sum1_v = np.zeros(r)
    cdef cnp.ndarray[double, ndim=1] sum0_v = np.zeros(r)
    cdef double[::1] s1x = sum1_x
    cdef double[::1] s0x = sum0_x
    cdef double[::1] s1v = sum1_v
    cdef double[::1] s0v = sum0_v
    cdef double loglik = 0.0, s1 = 0.0, s0 = 0.0
    cdef double base0 = log_1malpha - 0.5 * (logdet0 + p * LOG_2PI)
    cdef double base1 = log_alpha - 0.5 * (logdet1 + p * LOG_2PI)
    cdef double q0, q1, lw0, lw1, e, t, pi, om, da, db
    cdef Py_ssize_t i, a, b, k
    cdef cnp.ndarray[double, ndim=1] buf0 = np.empty(p)
    cdef cnp.ndarray[double, ndim=1] buf1 = np.empty(p)
    cdef double[::1] d0 = buf0
    cdef double[::1] d1 = buf1
    cdef double ip00, ip11, ip10

    if p == 1:
        # Scalar fast path: the reproduction grids run with p = 1.
        ip00 = prec0[0, 0]
        ip11 = prec1[0, 0]
        for i in range(n):
            da = x[i, 0] - mu0[0]
            db = x[i, 0] - mu1[0]
            lw0 = base0 - 0.5 * da * da * ip00
            lw1 = base1 - 0.5 * db * db * ip11
            e = lw1 - lw0
            if e >= 0.0:
                t = exp(-e)
                loglik += lw1 + log1p(t)
                pi = 1.0 / (1.0 + t)
            else:
                t = exp(e)
                loglik += lw0 + log1p(t)
                pi = t / (1.0 + t)
            om = 1.0 - pi
            s1 += pi
            s0 += om
            s1x[0] += pi * x[i, 0]
            s0x[0] += om * x[i, 0]
            s1v[0] += pi * db * db
            s0v[0] += om * da * da
        return loglik, s1, sum1_x, sum1_v, s0, sum0_x, sum0_v

    for i in range(n):
        q0 = 0.0
        q1 = 0.0
        for a in range(p):
            d0[a] = x[i, a] - mu0[a]
            d1[a] = x[i, a] - mu1[a]
        for a in range(p):
            ip00 = 0.0
            ip11 = 0.0
            for b in range(p):
                ip00 += prec0[a, b] * d0[b]
                ip11 += prec1[a, b] * d1[b]
            q0 += d0[a] * ip00
            q1 += d1[a] * ip11
        lw0 = base0 - 0.5 * q0
        lw1 = base1 - 0.5 * q1
        e = lw1 - lw0
        if e >= 0.0:
            t = exp(-e)
            loglik += lw1 + log1p(t)
            pi = 1.0 / (1.0 + t)
        else:
            t = exp(e)
            loglik += lw0 + log1p(t)
            pi = t / (1.0 + t)
        om = 1.0 - pi
        s1 += pi
        s0 += om
        k = 0
        for a in range(p):
            s1x[a] += pi * x[i, a]
            s0x[a] += om * x[i, a]
            for b in range(a, p):
                s1v[k] += pi * d1[a] * d1[b]
                s0v[k] += om * d0[a] * d0[b]
                k += 1
    return loglik, s1, sum1_x, sum1_v, s0, sum0_x, sum0_v

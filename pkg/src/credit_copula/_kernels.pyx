# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, ceil

cnp.import_array()


def contract_portfolio_losses(const double[:, ::1] returns, const double[::1] drift,
                              const double[::1] face, const cnp.intp_t[::1] owner,
                              const double[::1] frac, Py_ssize_t n_portfolios):
    cdef Py_ssize_t n = returns.shape[0], m = returns.shape[1]
    cdef Py_ssize_t i, j
    cdef double v, f
    out_arr = np.zeros((n, n_portfolios), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if drift.shape[0] != m or face.shape[0] != m or owner.shape[0] != m or frac.shape[0] != m:
        raise ValueError("per-contract arrays must match the number of return columns")
    for j in range(m):
        if owner[j] < 0 or owner[j] >= n_portfolios:
            raise ValueError("owner index out of range")
    with nogil:
        for i in range(n):
            for j in range(m):
                f = face[j]
                v = exp(returns[i, j] + drift[j])
                if v < f:
                    out[i, owner[j]] += frac[j] * ((f - v) / f)
    return out_arr


def copula_bin_counts(const double[::1] u, const double[::1] v, Py_ssize_t b):
    cdef Py_ssize_t n = u.shape[0], k, iu, iv
    cdef double shrink = 1.0 - 1e-12
    if v.shape[0] != n:
        raise ValueError("u and v must have equal length")
    counts_arr = np.zeros((b, b), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] counts = counts_arr
    with nogil:
        for k in range(n):
            iu = <Py_ssize_t>ceil(u[k] * b * shrink) - 1
            iv = <Py_ssize_t>ceil(v[k] * b * shrink) - 1
            if iu < 0:
                iu = 0
            elif iu >= b:
                iu = b - 1
            if iv < 0:
                iv = 0
            elif iv >= b:
                iv = b - 1
            counts[iu, iv] += 1
    return counts_arr

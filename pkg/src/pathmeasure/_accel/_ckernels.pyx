# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np

from libc.math cimport floor, sqrt


def lag_accumulate(const double complex[:, ::1] lag, const double complex[:, ::1] g,
                   const double[::1] w, Py_ssize_t m):
    # complex products written out on interleaved (re, im) pairs; avoids the
    # C99 complex multiply with its inf/nan handling
    cdef Py_ssize_t P = lag.shape[1]
    cdef Py_ssize_t j, p
    cdef double wj, lr, li, gr, gi
    out = np.zeros(2 * P, dtype=np.float64)
    cdef double[::1] acc = out
    cdef const double[:, ::1] L = np.asarray(lag).view(np.float64)
    cdef const double[:, ::1] G = np.asarray(g).view(np.float64)
    for j in range(m):
        wj = w[j]
        for p in range(P):
            lr = L[m - j, 2 * p]
            li = L[m - j, 2 * p + 1]
            gr = G[j, 2 * p] * wj
            gi = G[j, 2 * p + 1] * wj
            acc[2 * p] += lr * gr - li * gi
            acc[2 * p + 1] += lr * gi + li * gr
    return out.view(np.complex128)


def bridge_fill(const double[:, ::1] z, double x, double y, double t, double D):
    cdef Py_ssize_t P = z.shape[0]
    cdef Py_ssize_t M = z.shape[1] + 1
    cdef double dt = t / M
    cdef Py_ssize_t i, k
    cdef double cur, remaining, mean, sd
    out = np.empty((P, M + 1), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(P):
        cur = x
        o[i, 0] = x
        for k in range(M - 1):
            remaining = (M - k) * dt
            mean = cur + (y - cur) * (dt / remaining)
            sd = sqrt(2.0 * D * dt * (remaining - dt) / remaining)
            cur = mean + sd * z[i, k]
            o[i, k + 1] = cur
        o[i, M] = y
    return out


def tridiag_solve(const double[::1] lower, const double[::1] diag,
                  const double[::1] upper, const double[::1] rhs):
    cdef Py_ssize_t n = diag.shape[0]
    cdef Py_ssize_t i
    cdef double denom
    c_arr = np.empty(n)
    d_arr = np.empty(n)
    x_arr = np.empty(n)
    cdef double[::1] c = c_arr
    cdef double[::1] d = d_arr
    cdef double[::1] x = x_arr
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / denom if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x_arr


def shift_deposit(const double complex[:, ::1] w, const double[::1] shift):
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t B = w.shape[1]
    cdef Py_ssize_t i, b, lo, hi
    cdef long base
    cdef double frac
    out = np.zeros((n, B), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    for i in range(n):
        base = <long>floor(shift[i])
        frac = shift[i] - base
        for b in range(B):
            lo = b + base
            hi = lo + 1
            if lo < 0:
                lo = 0
            elif lo > B - 1:
                lo = B - 1
            if hi < 0:
                hi = 0
            elif hi > B - 1:
                hi = B - 1
            o[i, lo] = o[i, lo] + w[i, b] * (1.0 - frac)
            o[i, hi] = o[i, hi] + w[i, b] * frac
    return out

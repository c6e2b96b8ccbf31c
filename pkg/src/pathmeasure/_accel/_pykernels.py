"""Numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them loop for
loop. Every function here must stay free of Python-level loops over the
large axis (paths, grid points, wavenumbers).
"""
import numpy as np


def lag_accumulate(lag, g, w, m):
    """Return ``sum_{j<m} w[j] * lag[m - j] * g[j]`` along the last axis."""
    if m <= 0:
        return np.zeros(lag.shape[1], dtype=np.complex128)
    weighted = g[:m] * w[:m, None]
    return np.einsum("jp,jp->p", lag[m:0:-1], weighted)


def bridge_fill(z, x, y, t, D):
    """Fill pinned Brownian-bridge paths from standard normals.

    ``z`` has shape (paths, M - 1); the result has shape (paths, M + 1) with
    column 0 equal to ``x`` and column M equal to ``y``.
    """
    z = np.asarray(z, dtype=np.float64)
    P, interior = z.shape
    M = interior + 1
    dt = t / M
    out = np.empty((P, M + 1))
    out[:, 0] = x
    out[:, M] = y
    cur = out[:, 0]
    for k in range(M - 1):
        remaining = (M - k) * dt
        mean = cur + (y - cur) * (dt / remaining)
        sd = np.sqrt(2.0 * D * dt * (remaining - dt) / remaining)
        cur = mean + sd * z[:, k]
        out[:, k + 1] = cur
    return out


def tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm. ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.shape[0]
    c = np.empty(n)
    d = np.empty(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / denom if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x = np.empty(n)
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def shift_deposit(w, shift):
    """Shift each row of ``w`` by ``shift[i]`` bins with linear interpolation.

    Mass pushed beyond the first or last bin is clipped onto that bin, so row
    totals are preserved exactly up to rounding.
    """
    w = np.asarray(w, dtype=np.complex128)
    n, B = w.shape
    base = np.floor(shift).astype(np.int64)
    frac = shift - base
    out = np.zeros_like(w)
    cols = np.arange(B)
    rows = np.repeat(np.arange(n), B)
    lo = np.clip(cols[None, :] + base[:, None], 0, B - 1).ravel()
    hi = np.clip(cols[None, :] + base[:, None] + 1, 0, B - 1).ravel()
    np.add.at(out, (rows, lo), (w * (1.0 - frac)[:, None]).ravel())
    np.add.at(out, (rows, hi), (w * frac[:, None]).ravel())
    return out

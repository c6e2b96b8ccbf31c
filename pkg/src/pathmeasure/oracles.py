"""Independent reference solutions.

Nothing here transports fields with kernels: the finite-difference solver
uses tridiagonal solves on the grid and the closed forms come from
``scipy.stats``. Keep it that way, so the references stay independent of
the code they check.
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _accel
from .errors import BoundaryMassLeak
from .grid_field import Field, SpatialGrid

__all__ = [
    "ReferenceSolution",
    "constant_potential_column",
    "crank_nicolson",
    "gaussian_heat_solution",
    "heat_density",
    "ou_exact_density",
]


@dataclass
class ReferenceSolution:
    """Stored time levels of a reference run."""

    method: str
    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray  # (levels, n)
    error_model: str

    def final(self):
        return Field(self.grid, self.values[-1], "real")

    def at(self, level):
        return Field(self.grid, self.values[level], "real")


def crank_nicolson(f0, D, V, t, M, budget=1e-10, startup_steps=0, store="final"):
    """Crank-Nicolson for ``df/dt = D f'' - V f`` with zero Dirichlet ends.

    Parameters
    ----------
    f0 : Field
        Real initial data; its end values are replaced by zero.
    D : float
        Diffusion coefficient.
    V : callable
        Potential, evaluated on the grid points.
    t : float
        Final time.
    M : int
        Time steps.
    budget : float
        Largest allowed absolute value next to either boundary at any step.
    startup_steps : int
        Number of initial steps replaced by two implicit Euler half steps
        each, to damp the stiff modes of rough data (Rannacher start).
    store : {'final', 'all'}

    Raises
    ------
    BoundaryMassLeak
        If the solution next to the boundary exceeds ``budget``.
    """
    if not t > 0 or M < 1:
        raise ValueError(f"need t > 0 and M >= 1, got t={t}, M={M}")
    grid = f0.grid
    h = grid.h
    dt = t / M
    vi = np.asarray(V(grid.points), dtype=np.float64)[1:-1]
    u = np.array(f0.values.real[1:-1], dtype=np.float64)
    ni = u.size
    r = D / h**2
    off = np.full(ni, -r)

    def implicit(theta_dt, rhs):
        # (I - theta_dt * L) u_new = rhs, with L u = D u'' - V u
        diag = 1.0 + theta_dt * (2.0 * r + vi)
        return _accel.tridiag_solve(theta_dt * off, diag, theta_dt * off, rhs)

    def apply_L(v):
        out = -(2.0 * r + vi) * v
        out[1:] += r * v[:-1]
        out[:-1] += r * v[1:]
        return out

    def check(v, step):
        edge = max(abs(v[0]), abs(v[-1]))
        if edge > budget:
            raise BoundaryMassLeak(
                f"solution reaches {edge:.3e} next to the boundary at step {step} (budget {budget:g})"
            )

    check(u, 0)
    levels = [np.concatenate([[0.0], u, [0.0]])] if store == "all" else None
    for step in range(1, M + 1):
        if step <= startup_steps:
            u = implicit(0.5 * dt, u)
            u = implicit(0.5 * dt, u)
        else:
            u = implicit(0.5 * dt, u + 0.5 * dt * apply_L(u))
        check(u, step)
        if levels is not None:
            levels.append(np.concatenate([[0.0], u, [0.0]]))
    full = np.concatenate([[0.0], u, [0.0]])
    if levels is None:
        times = np.array([t])
        values = full[None, :]
    else:
        times = t * np.arange(M + 1) / M
        values = np.array(levels)
    return ReferenceSolution("crank_nicolson", grid, times, values, "O(dt^2 + h^2)")


def ou_exact_density(theta, sigma, x, y, t):
    """Density in ``y`` of the OU process started at ``x`` after time ``t``."""
    if not (theta > 0 and sigma > 0 and t > 0):
        raise ValueError("theta, sigma and t must be > 0")
    mean = np.asarray(x, dtype=np.float64) * np.exp(-theta * t)
    var = sigma**2 * (1.0 - np.exp(-2.0 * theta * t)) / (2.0 * theta)
    return stats.norm.pdf(y, loc=mean, scale=np.sqrt(var))


def heat_density(x, y, t, D=1.0):
    """Free diffusion density with variance ``2 D t``."""
    return stats.norm.pdf(np.asarray(x, dtype=np.float64) - y, scale=np.sqrt(2.0 * D * t))


def constant_potential_column(x, y, t, c, D=1.0):
    """``exp(-c t)`` times the free diffusion density."""
    return np.exp(-c * t) * heat_density(x, y, t, D)


def gaussian_heat_solution(x, t, D=1.0, var0=1.0):
    """Heat flow of an ``N(0, var0)`` density: ``N(0, var0 + 2 D t)``."""
    return stats.norm.pdf(x, scale=np.sqrt(var0 + 2.0 * D * t))

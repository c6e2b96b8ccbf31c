"""Time marching for the integral equation of the perturbed kernel.

On the uniform grid ``s_m = m ds`` the column ``u_m = phi_V(., y; s_m)``
satisfies, with trapezoid weights in time,

    u_m = e^{s_m A} delta_y - ds * sum_{j<m} w_j e^{(s_m - s_j) A} (V u_j)
          - (ds / 2) V u_m,

where the last term comes from the node ``s_j = s_m`` at which the kernel is
the identity. Solving for ``u_m`` needs ``1 + (ds/2) V > 0`` on the grid.
"""
import json
from dataclasses import dataclass

import numpy as np

from .errors import ImplicitDenominatorVanishes
from .grid_field import DEFAULT_BUDGET, Field, FieldHistory, LagStack, SpatialGrid

__all__ = ["VolterraState", "residual_check", "volterra_solve"]


@dataclass
class VolterraState:
    """All marched columns of ``phi_V(., y; s_m)``, ``m = 0 .. M``."""

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray  # (M + 1, n); row 0 is the discrete delta at y
    y: float
    method: str = "spectral"

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def t(self):
        return float(self.times[-1])

    def column(self, m):
        return Field(self.grid, self.values[m], "real")

    def final(self):
        return self.column(self.steps)

    def history(self):
        return FieldHistory(self.grid, self.times, self.values)

    def to_dict(self, stride=1):
        """Time grid plus columns (x, re, im compatible) at every ``stride``-th level and the last."""
        idx = list(range(0, self.steps + 1, stride))
        if idx[-1] != self.steps:
            idx.append(self.steps)
        return {
            "grid": self.grid.to_dict(),
            "y": self.y,
            "method": self.method,
            "times": self.times.tolist(),
            "columns": [
                {"level": m, "t": float(self.times[m]), "re": self.values[m].tolist(), "im": [0.0] * self.grid.n}
                for m in idx
            ],
        }

    def to_json(self, stride=1):
        return json.dumps(self.to_dict(stride), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        grid = SpatialGrid.from_dict(d["grid"])
        times = np.asarray(d["times"], dtype=np.float64)
        values = np.full((times.size, grid.n), np.nan)
        for col in d["columns"]:
            values[col["level"]] = col["re"]
        return cls(grid, times, values, d["y"], d.get("method", "spectral"))


def _time_grid(t, M):
    out = t * np.arange(M + 1) / M
    out[-1] = t
    return out


def volterra_solve(kernel, V, y, t, grid, M, method=None, budget=DEFAULT_BUDGET):
    """March the integral equation for ``phi_V(., y; s)`` up to ``s = t``.

    Parameters
    ----------
    kernel : TransitionKernel
        A real-valued kernel.
    V : Potential
    y : float
        Source; must be a grid point.
    t : float
    grid : SpatialGrid
    M : int
        Number of time steps.
    method : {'direct', 'spectral', None}
        Lag transport; ``None`` picks spectral when available.

    Raises
    ------
    ImplicitDenominatorVanishes
        If ``1 + (ds/2) V(x) <= 0`` somewhere on the grid.
    """
    if not t > 0 or M < 1:
        raise ValueError(f"need t > 0 and M >= 1, got t={t}, M={M}")
    ds = t / M
    vals = V.on_grid(grid)
    denom = 1.0 + 0.5 * ds * vals
    if np.any(denom <= 0.0):
        bad = grid.points[np.argmin(denom)]
        raise ImplicitDenominatorVanishes(
            f"1 + (ds/2) V = {denom.min():.3g} at x = {bad:.4g}; reduce ds below {2.0 / -vals.min():.3g}"
        )
    lag = LagStack(kernel, grid, ds, M, method, budget)
    delta = Field.delta(grid, y).values.real
    cols = np.empty((M + 1, grid.n))
    cols[0] = delta
    hat_delta = lag.transform(delta)[0]
    first = lag.transform(vals * delta)[0]
    hat = np.empty((M + 1, first.size), dtype=first.dtype)
    hat[0] = first
    w = np.ones(M + 1)
    w[0] = 0.5
    for m in range(1, M + 1):
        rhs = lag.apply(hat_delta, m) - ds * lag.accumulate(hat, w, m)
        cols[m] = rhs / denom
        hat[m] = lag.transform(vals * cols[m])[0]
    return VolterraState(grid, _time_grid(t, M), cols, float(y), lag.method)


def _simpson_weights(m):
    """Composite quadrature weights on ``m`` equal intervals (unit spacing).

    Simpson for even ``m``; Simpson followed by one 3/8 panel for odd
    ``m >= 3``; trapezoid for ``m = 1``.
    """
    w = np.zeros(m + 1)
    if m == 1:
        w[:] = 0.5
        return w
    simpson_end = m if m % 2 == 0 else m - 3
    for a in range(0, simpson_end, 2):
        w[a : a + 3] += np.array([1.0, 4.0, 1.0]) / 3.0
    if m % 2 == 1:
        w[m - 3 :] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w


def residual_check(state, kernel, V, method=None, budget=DEFAULT_BUDGET, per_level=False):
    """Max defect of the stored columns in the integral equation.

    The time integral is re-evaluated with composite Simpson / 3/8 weights
    instead of the trapezoid rule used for marching, so a correct solve
    leaves a defect of the size of the trapezoid error, ``O(ds^2)``.
    """
    grid = state.grid
    M = state.steps
    ds = state.t / M
    vals = V.on_grid(grid)
    lag = LagStack(kernel, grid, ds, M, method or state.method, budget)
    delta = Field.delta(grid, state.y).values.real
    hat_delta = lag.transform(delta)[0]
    hat = lag.transform(vals * state.values)
    defects = np.zeros(M + 1)
    defects[0] = np.max(np.abs(state.values[0] - delta))
    for m in range(1, M + 1):
        w = _simpson_weights(m)
        integral = ds * lag.accumulate(hat, w, m) + ds * w[m] * vals * state.values[m]
        residual = state.values[m] - lag.apply(hat_delta, m) + integral
        defects[m] = np.max(np.abs(residual))
    if per_level:
        return defects
    return float(defects.max())

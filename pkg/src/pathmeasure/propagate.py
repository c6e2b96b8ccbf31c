"""Time-sliced propagation with a multiplicative potential.

One slice of length ``dt`` multiplies by ``exp(-V dt)`` and then transports
with the kernel (Lie), or wraps the transport in two half-step potential
factors (Strang). Iterating slices on a discrete delta gives the sliced
perturbed fundamental solution; evaluating it at a point gives the N-fold
cylinder integral with weight ``exp(-sum V(x_k) dt)``.

For a general weight ``f(action)`` the state is augmented by the running
action: every grid point carries a histogram over action bins, shifted by
``V(x) dt`` per slice and transported layer by layer.
"""
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from .errors import ActionRangeUnbounded, PotentialOverflow, UnboundedComposite
from .grid_field import DEFAULT_BUDGET, Field, SpatialGrid, TransferOperator, field_to_dict

__all__ = [
    "ActionHistogram",
    "SliceSchedule",
    "SolveReport",
    "action_histogram",
    "cylinder_integral_exp",
    "cylinder_integral_general",
    "fundamental_solution_V",
    "potential_factor",
    "trotter_propagate",
]

_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class SliceSchedule:
    """``N`` slices of ``dt = t / N`` (computed once); ``times[k] = t k / N`` with the last entry exactly ``t``."""

    t: float
    N: int
    scheme: str = "lie"

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"final time must be > 0, got {self.t}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"slice count must be >= 1, got {self.N}")
        if self.scheme not in ("lie", "strang"):
            raise ValueError(f"scheme must be 'lie' or 'strang', got {self.scheme!r}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self):
        return self.t / self.N

    @property
    def times(self):
        out = self.t * np.arange(self.N + 1) / self.N
        out[-1] = self.t
        return out

    def to_dict(self):
        return {"t": self.t, "N": self.N, "dt": self.dt, "scheme": self.scheme}


def potential_factor(values, dt):
    """``exp(-V dt)`` with an overflow guard.

    Returns the factor and the number of grid points where it underflows
    to zero.
    """
    expo = -np.asarray(values, dtype=np.float64) * dt
    if not np.all(np.isfinite(expo)):
        raise PotentialOverflow("potential is not finite on the grid")
    if expo.max() > _EXP_LIMIT:
        raise PotentialOverflow(
            f"exp(-V dt) overflows: min V * dt = {-expo.max():.4g}; use more slices"
        )
    return np.exp(expo), int(np.count_nonzero(expo < -745.0))


def trotter_propagate(f0, kernel, V, schedule, method=None, budget=DEFAULT_BUDGET, diagnostics=None):
    """Approximate ``exp(t (A - V)) f0`` by ``N`` splitting steps.

    Parameters
    ----------
    f0 : Field
    kernel : TransitionKernel
    V : Potential
    schedule : SliceSchedule
    method : {'direct', 'spectral', None}
        Kernel transport; ``None`` picks spectral when the kernel has a symbol.
    diagnostics : dict, optional
        Filled with transport method, tail estimate and underflow count.
    """
    grid = f0.grid
    dt = schedule.dt
    op = TransferOperator(kernel, grid, dt, method, budget)
    vals = V.on_grid(grid)
    real = f0.scalar_kind == "real" and kernel.is_real
    f = f0.values.real.copy() if real else f0.values.copy()
    if schedule.scheme == "lie":
        e, under = potential_factor(vals, dt)
        for _ in range(schedule.N):
            f = op(e * f)
    else:
        e, under = potential_factor(vals, dt)
        eh, _ = potential_factor(vals, 0.5 * dt)
        f = op(eh * f)
        for _ in range(schedule.N - 1):
            f = op(e * f)
        f = eh * f
    if diagnostics is not None:
        diagnostics.update(
            {"transport": op.method, "tail_mass": op.tail, "underflow_points": under}
        )
    if real:
        return Field(grid, f, "real")
    return Field(grid, f, "complex")


def fundamental_solution_V(kernel, V, grid, schedule, y, method=None, budget=DEFAULT_BUDGET, diagnostics=None):
    """Column ``x -> phi_V(x, y; t)`` from a discrete delta at ``y``."""
    return trotter_propagate(Field.delta(grid, y), kernel, V, schedule, method, budget, diagnostics)


def _require_bounded_below(V):
    if not V.bounded_below:
        raise UnboundedComposite(
            f"potential {V.name} has no finite lower bound; exp(-action) is not certified bounded"
        )


def cylinder_integral_exp(kernel, V, x, y, t, N, grid, scheme="lie", method=None, budget=DEFAULT_BUDGET):
    """N-slice cylinder integral of ``exp(-sum V(x_k) dt)`` between ``x`` and ``y``.

    The start ``x`` and end ``y`` are grid points. The first slice starts at
    ``y`` and the integral is read off at ``x``, so two-point kernels are
    composed in the order ``p(x, x_1) ... p(x_{N-1}, y)``.
    """
    _require_bounded_below(V)
    col = fundamental_solution_V(kernel, V, grid, SliceSchedule(t, N, scheme), y, method, budget)
    return complex(col.values[grid.index_of(x)])


@dataclass
class ActionHistogram:
    """Weights over (grid point, action node).

    Action nodes are ``lo + j * (hi - lo) / (B - 1)``; weights between nodes
    are split linearly, so the total weight per grid point is exact.
    """

    grid: SpatialGrid
    lo: float
    hi: float
    weights: np.ndarray  # (n, B)

    @property
    def bins(self):
        return self.weights.shape[1]

    @property
    def spacing(self):
        return (self.hi - self.lo) / (self.bins - 1)

    @property
    def nodes(self):
        return self.lo + self.spacing * np.arange(self.bins)

    def total(self):
        """Sum over action bins at every grid point."""
        return self.weights.sum(axis=1)

    def integrate(self, f, at_index):
        """``sum_b f(a_b) w(x, b)`` at the grid index ``at_index``."""
        return complex(np.dot(np.asarray(f(self.nodes)), self.weights[at_index]))


def _action_range(vals, t):
    if not np.all(np.isfinite(vals)):
        raise ActionRangeUnbounded("potential is not finite on the grid; action range is unbounded")
    lo = min(0.0, t * float(vals.min()))
    hi = max(0.0, t * float(vals.max()))
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


def action_histogram(kernel, V, y, t, N, bins, grid, scheme="lie", method=None, budget=DEFAULT_BUDGET):
    """Propagate the action-augmented state from a delta at ``y`` for ``N`` slices."""
    if int(bins) != bins or bins < 2:
        raise ValueError(f"need at least 2 action bins, got {bins}")
    schedule = SliceSchedule(t, N, scheme)
    dt = schedule.dt
    vals = V(grid.points)
    lo, hi = _action_range(vals, t)
    hist = ActionHistogram(grid, lo, hi, np.zeros((grid.n, int(bins))))
    op = TransferOperator(kernel, grid, dt, method, budget)
    real = kernel.is_real
    w = np.zeros((grid.n, hist.bins), dtype=np.complex128)
    start = (0.0 - lo) / hist.spacing
    j0 = min(int(np.floor(start)), hist.bins - 2)
    frac = start - j0
    iy = grid.index_of(y)
    w[iy, j0] = (1.0 - frac) / grid.h
    w[iy, j0 + 1] = frac / grid.h
    shift_full = vals * dt / hist.spacing

    def transport(arr):
        if real:
            return op(arr.real) + 1j * op(arr.imag) if np.any(arr.imag) else op(arr.real).astype(np.complex128)
        return op(arr)

    if scheme == "lie":
        for _ in range(N):
            w = transport(_accel.shift_deposit(w, shift_full))
    else:
        half = 0.5 * shift_full
        w = transport(_accel.shift_deposit(w, half))
        for _ in range(N - 1):
            w = transport(_accel.shift_deposit(w, shift_full))
        w = _accel.shift_deposit(w, half)
    hist.weights = w
    return hist


def cylinder_integral_general(kernel, V, f, x, y, t, N, bins, grid, scheme="lie", method=None, budget=DEFAULT_BUDGET):
    """N-slice cylinder integral of ``f(sum V(x_k) dt)`` between ``x`` and ``y``.

    Uses an action histogram with ``bins`` nodes spanning
    ``[min(0, t min V), max(0, t max V)]`` over the grid; ``V`` must be finite
    on the grid.
    """
    hist = action_histogram(kernel, V, y, t, N, bins, grid, scheme, method, budget)
    return hist.integrate(f, grid.index_of(x))


@dataclass
class SolveReport:
    """Result of one deterministic solve, serializable to JSON."""

    method: str
    grid: SpatialGrid
    schedule: dict
    diagnostics: dict = field(default_factory=dict)
    field: Optional[Field] = None
    value: Optional[complex] = None

    def to_dict(self):
        out = {
            "method": self.method,
            "grid": self.grid.to_dict(),
            "schedule": self.schedule,
            "diagnostics": self.diagnostics,
        }
        if self.field is not None:
            out["field"] = field_to_dict(self.field)
        if self.value is not None:
            out["value"] = {"re": float(np.real(self.value)), "im": float(np.imag(self.value))}
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

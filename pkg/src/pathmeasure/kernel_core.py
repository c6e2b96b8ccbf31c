"""Transition kernels, potentials and checks of the kernel identities.

A transition kernel is a family ``p(x, y, t)`` for ``t > 0``. Convolution
kernels depend on ``x - y`` only and may carry a Fourier multiplier
``m(k, t) = exp(-t * sigma(k))``; the generator then acts in Fourier space as
multiplication by ``-sigma(k)``, so that ``d/dt f = A f``.

Sign convention for polynomial symbols: a list of terms ``(n, c)`` stands for
``sigma(k) = sum c * (i k)**n``. The heat kernel with diffusion coefficient
``D`` is ``[(2, -D)]``.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import (
    NoSymbol,
    NonPositiveTime,
    PotentialOverflow,
    TruncationBudgetExceeded,
    UndefinedTime,
    UnstableSymbol,
)
from .grid_field import DEFAULT_BUDGET, Field, SpatialGrid

__all__ = [
    "HeatKernel",
    "KernelForm",
    "OUKernel",
    "Potential",
    "SpectralKernel",
    "TabulatedKernel",
    "TransitionKernel",
    "check_chapman_kolmogorov",
    "check_delta_limit",
    "check_normalization",
    "eval_kernel",
    "kernel_multiplier",
    "lagrangian_to_kernel",
]

STABILITY_EPS = 1e-9


class KernelForm(str, Enum):
    CONVOLUTION = "convolution"
    TWO_POINT = "two_point"


def _check_time(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(~(t > 0)):
        raise NonPositiveTime(f"kernel time must be > 0, got {t}")
    return t


class TransitionKernel:
    """Common interface. Subclasses set ``kind``, ``form``, ``positivity``."""

    kind = "abstract"
    form = KernelForm.TWO_POINT
    positivity = False
    has_symbol = False
    is_real = True

    def evaluate(self, x, y, t):
        raise NotImplementedError

    def __call__(self, x, y, t):
        return self.evaluate(x, y, t)

    def symbol(self, k):
        raise NoSymbol(f"{self.kind} kernel has no Fourier symbol")

    def multiplier(self, k, t):
        if not self.has_symbol:
            raise NoSymbol(f"{self.kind} kernel has no Fourier multiplier")
        t = float(t)
        if t < 0:
            raise NonPositiveTime(f"multiplier time must be >= 0, got {t}")
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(-t * self.symbol(np.asarray(k, dtype=np.float64)))

    def check_band(self, k):
        """Raise ``UnstableSymbol`` if the multiplier grows on the wavenumbers ``k``."""
        if not self.has_symbol:
            return
        growth = -np.min(self.symbol(np.asarray(k, dtype=np.float64)).real)
        if growth > STABILITY_EPS:
            raise UnstableSymbol(
                f"{self.kind} symbol has Re sigma = {-growth:.3e} < 0 on the band "
                f"|k| <= {np.max(np.abs(k)):.4g}; the multiplier grows like exp({growth:.3g} t)"
            )

    def times(self):
        """Sampled times for tabulated kernels; ``None`` means all ``t > 0``."""
        return None

    def grid_offsets(self, grid, t):
        """Convolution kernels: ``phi(d)`` at ``d = (j - (n-1)) h``, ``j = 0 .. 2n-2``."""
        if self.form != KernelForm.CONVOLUTION:
            raise TypeError(f"{self.kind} kernel is not of convolution form")
        d = grid.h * np.arange(-(grid.n - 1), grid.n)
        return np.asarray(self.evaluate(d, 0.0, t))

    def grid_matrix(self, grid, t):
        """``P[i, j] = p(x_i, x_j, t)`` on the grid."""
        if self.form == KernelForm.CONVOLUTION:
            offs = self.grid_offsets(grid, t)
            idx = np.arange(grid.n)
            return offs[(idx[:, None] - idx[None, :]) + grid.n - 1]
        x = grid.points
        return np.asarray(self.evaluate(x[:, None], x[None, :], t))

    def row(self, grid, x, t):
        """``y -> p(x, y, t)`` on the grid."""
        return np.asarray(self.evaluate(x, grid.points, t))

    def tail_outside(self, x, t, a, b):
        """Mass of ``|p(x, ., t)|`` outside ``[a, b]``; ``None`` if unknown."""
        return None

    def spread_tail(self, radius, t):
        """Mass of the kernel farther than ``radius`` from its centre; ``None`` if unknown."""
        return None

    def describe(self):
        return {"kind": self.kind}


def _gaussian_tail(lo, hi, mean, var):
    """Mass of N(mean, var) outside [lo, hi]."""
    s = np.sqrt(2.0 * var)
    return 0.5 * special.erfc((hi - mean) / s) + 0.5 * special.erfc((mean - lo) / s)


class HeatKernel(TransitionKernel):
    """``(4 pi D t)^(-1/2) exp(-(x - y)^2 / (4 D t))``."""

    kind = "heat"
    form = KernelForm.CONVOLUTION
    positivity = True
    has_symbol = True

    def __init__(self, D=1.0):
        if not D > 0:
            raise ValueError(f"diffusion coefficient must be > 0, got {D}")
        self.D = float(D)

    def evaluate(self, x, y, t):
        t = _check_time(t)
        d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        return np.exp(-(d * d) / (4.0 * self.D * t)) / np.sqrt(4.0 * np.pi * self.D * t)

    def symbol(self, k):
        k = np.asarray(k, dtype=np.float64)
        return (self.D * k * k).astype(np.complex128)

    def tail_outside(self, x, t, a, b):
        return float(_gaussian_tail(a, b, x, 2.0 * self.D * t))

    def spread_tail(self, radius, t):
        return float(special.erfc(radius / np.sqrt(4.0 * self.D * t)))

    def describe(self):
        return {"kind": self.kind, "D": self.D}


class SpectralKernel(TransitionKernel):
    """Convolution kernel defined by ``sigma(k) = sum c (i k)^n``.

    Parameters
    ----------
    terms : sequence of (int, float)
        Orders ``n >= 1`` and real coefficients ``c``.
    band : float
        Half-width of the wavenumber band used for the stability gate and
        for pointwise evaluation by inverse Fourier quadrature.
    band_points : int
        Quadrature nodes across ``[-band, band]``.

    Raises
    ------
    UnstableSymbol
        If ``Re sigma(k) < -eps`` somewhere on the band.
    """

    kind = "spectral"
    form = KernelForm.CONVOLUTION
    has_symbol = True

    def __init__(self, terms, band=64.0, band_points=8193):
        terms = [(int(n), float(c)) for n, c in terms]
        if not terms:
            raise ValueError("spectral kernel needs at least one term")
        for n, c in terms:
            if n < 1:
                raise ValueError(f"derivative order must be >= 1, got {n}")
            if not np.isfinite(c):
                raise ValueError(f"coefficient must be finite, got {c}")
        self.terms = tuple(terms)
        self.band = float(band)
        self.band_points = int(band_points)
        self._k = np.linspace(-self.band, self.band, self.band_points)
        self.check_band(self._k)
        active = [(n, c) for n, c in self.terms if c != 0.0]
        self.positivity = len(active) == 1 and active[0][0] == 2 and active[0][1] < 0
        self.dispersive = any(n % 2 == 1 for n, c in active)

    def _heat_D(self):
        return -sum(c for n, c in self.terms if n == 2)

    def symbol(self, k):
        k = np.asarray(k, dtype=np.float64)
        out = np.zeros(k.shape, dtype=np.complex128)
        for n, c in self.terms:
            out += c * (1j * k) ** n
        return out

    def evaluate(self, x, y, t):
        t = float(_check_time(t))
        d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        if self.positivity:
            D = self._heat_D()
            return np.exp(-(d * d) / (4.0 * D * t)) / np.sqrt(4.0 * np.pi * D * t) + 0j
        m = self.multiplier(self._k, t)
        w = np.full(self._k.size, self._k[1] - self._k[0])
        w[0] = w[-1] = 0.5 * w[0]
        flat = d.reshape(-1)
        out = np.exp(1j * np.outer(flat, self._k)) @ (w * m) / (2.0 * np.pi)
        return out.reshape(d.shape)

    def grid_offsets(self, grid, t):
        """Band-limited samples from the periodic transform on ``2n - 1`` points."""
        _check_time(t)
        P = 2 * grid.n - 1
        k = 2.0 * np.pi * np.fft.fftfreq(P, d=grid.h)
        self.check_band(k)
        phi = np.fft.ifft(self.multiplier(k, t)) / grid.h
        # index 0 of phi is offset 0; reorder to offsets -(n-1) .. (n-1)
        return np.roll(phi, grid.n - 1)

    def tail_outside(self, x, t, a, b):
        if self.positivity:
            D = self._heat_D()
            return float(_gaussian_tail(a, b, x, 2.0 * D * t))
        return None

    def spread_tail(self, radius, t):
        if self.positivity:
            D = self._heat_D()
            return float(special.erfc(radius / np.sqrt(4.0 * D * t)))
        if self.dispersive:
            return None
        # even real symbol: integrate |phi| numerically beyond the radius
        d = np.linspace(radius, radius + max(radius, 10.0), 2001)
        vals = np.abs(self.evaluate(d, 0.0, t))
        return float(2.0 * integrate.trapezoid(vals, d))

    def describe(self):
        return {"kind": self.kind, "terms": [list(t) for t in self.terms]}


class OUKernel(TransitionKernel):
    """Ornstein-Uhlenbeck transition density ``dX = -theta X dt + sigma dW``."""

    kind = "ou"
    form = KernelForm.TWO_POINT
    positivity = True

    def __init__(self, theta=1.0, sigma=1.0):
        if not theta > 0 or not sigma > 0:
            raise ValueError(f"OU needs theta > 0 and sigma > 0, got {theta}, {sigma}")
        self.theta = float(theta)
        self.sigma = float(sigma)

    def mean(self, x, t):
        return np.asarray(x, dtype=np.float64) * np.exp(-self.theta * t)

    def variance(self, t):
        return self.sigma**2 * -np.expm1(-2.0 * self.theta * t) / (2.0 * self.theta)

    def evaluate(self, x, y, t):
        t = _check_time(t)
        var = self.variance(t)
        r = np.asarray(y, dtype=np.float64) - self.mean(x, t)
        return np.exp(-(r * r) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)

    def tail_outside(self, x, t, a, b):
        return float(_gaussian_tail(a, b, float(self.mean(x, t)), self.variance(t)))

    def spread_tail(self, radius, t):
        return float(special.erfc(radius / np.sqrt(2.0 * self.variance(t))))

    def describe(self):
        return {"kind": self.kind, "theta": self.theta, "sigma": self.sigma}


class TabulatedKernel(TransitionKernel):
    """Two-point kernel given by samples on a grid at a finite set of times.

    Values are interpolated linearly in ``x`` and ``y`` and vanish outside
    the grid. Evaluation at a time that is not sampled raises
    ``UndefinedTime``.
    """

    kind = "tabulated"
    form = KernelForm.TWO_POINT

    def __init__(self, grid, times, values):
        values = np.array(values, dtype=np.float64)
        times = np.array(times, dtype=np.float64).reshape(-1)
        if values.shape != (times.size, grid.n, grid.n):
            raise ValueError(f"values must have shape {(times.size, grid.n, grid.n)}, got {values.shape}")
        if np.any(~(times > 0)):
            raise NonPositiveTime("tabulated times must be > 0")
        values.setflags(write=False)
        self.grid = grid
        self._times = times
        self.values = values
        self.positivity = bool(np.all(values >= 0.0))

    @classmethod
    def from_kernel(cls, kernel, grid, times):
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        return cls(grid, times, np.stack([np.real(kernel.grid_matrix(grid, t)) for t in times]))

    def perturbed(self, t, x, y, amount):
        """Copy with ``amount`` added at the grid node nearest ``(x, y)`` at time ``t``."""
        values = self.values.copy()
        values[self._time_index(t), self.grid.index_of(x), self.grid.index_of(y)] += amount
        return TabulatedKernel(self.grid, self._times, values)

    def times(self):
        return tuple(self._times)

    def _time_index(self, t):
        hits = np.flatnonzero(np.isclose(self._times, t, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise UndefinedTime(f"tabulated kernel is defined only at t in {self.times()}, got {t}")
        return int(hits[0])

    def _interp_weights(self, x):
        g = self.grid
        u = (np.asarray(x, dtype=np.float64) - g.a) / g.h
        inside = (u >= -1e-9) & (u <= g.n - 1 + 1e-9)
        u = np.clip(u, 0.0, g.n - 1)
        lo = np.minimum(np.floor(u).astype(np.int64), g.n - 2)
        frac = u - lo
        return lo, frac, inside

    def evaluate(self, x, y, t):
        _check_time(t)
        table = self.values[self._time_index(float(t))]
        x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
        xi, xf, xin = self._interp_weights(x)
        yi, yf, yin = self._interp_weights(y)
        v = (
            table[xi, yi] * (1 - xf) * (1 - yf)
            + table[xi + 1, yi] * xf * (1 - yf)
            + table[xi, yi + 1] * (1 - xf) * yf
            + table[xi + 1, yi + 1] * xf * yf
        )
        return np.where(xin & yin, v, 0.0)

    def grid_matrix(self, grid, t):
        if grid == self.grid:
            return self.values[self._time_index(float(t))].copy()
        return super().grid_matrix(grid, t)

    def tail_outside(self, x, t, a, b):
        # proxy: edge values times the domain length
        edge = np.abs(self.evaluate(x, np.array([a, b]), t))
        return float(np.max(edge) * (b - a))

    def describe(self):
        return {"kind": self.kind, "grid": self.grid.to_dict(), "times": list(self.times())}


def lagrangian_to_kernel(terms, convention="auto", **kwargs):
    """Spectral kernel for the velocity terms ``(n, c)`` of a Lagrangian.

    Parameters
    ----------
    terms : sequence of (int, float)
        Velocity powers and coefficients. A potential term is not part of
        the kernel; pass it as a ``Potential`` to the solvers.
    convention : {'literal', 'generator', 'auto'}
        ``'literal'`` uses ``sigma = sum c (ik)^n``; ``'generator'`` reads the
        terms as the operator ``A = sum c d^n``, i.e. ``sigma = -sum c (ik)^n``
        (so ``[(2, 1)]`` is the heat kernel with ``D = 1``). ``'auto'`` takes the
        literal reading when it is stable and the generator reading otherwise.

    Raises
    ------
    UnstableSymbol
        If no allowed reading yields a bounded multiplier.
    """
    terms = [(int(n), float(c)) for n, c in terms]
    if not terms:
        raise ValueError("lagrangian needs at least one velocity term")
    flipped = [(n, -c) for n, c in terms]
    if convention == "literal":
        return SpectralKernel(terms, **kwargs)
    if convention == "generator":
        return SpectralKernel(flipped, **kwargs)
    if convention != "auto":
        raise ValueError(f"unknown convention {convention!r}")
    try:
        return SpectralKernel(terms, **kwargs)
    except UnstableSymbol:
        pass
    try:
        return SpectralKernel(flipped, **kwargs)
    except UnstableSymbol as err:
        raise UnstableSymbol(f"terms {terms} are unstable under both sign readings") from err


def eval_kernel(kernel, x, y, t):
    """Pointwise ``p(x, y, t)``."""
    return complex(np.asarray(kernel.evaluate(x, y, t)).reshape(()))


def kernel_multiplier(kernel, k, t):
    """``m(k, t) = exp(-t sigma(k))`` for kernels with a symbol."""
    if not kernel.has_symbol:
        raise NoSymbol(f"{kernel.kind} kernel has no Fourier multiplier")
    return complex(np.asarray(kernel.multiplier(np.asarray([k], dtype=np.float64), t))[0])


def _core_rows(kernel, grid, times, budget):
    """Grid rows whose kernel mass outside the grid stays within ``budget``."""
    x = grid.points
    keep = np.ones(grid.n, dtype=bool)
    known = False
    for t in times:
        for i in range(grid.n):
            if not keep[i]:
                continue
            tail = kernel.tail_outside(x[i], t, grid.a, grid.b)
            if tail is None:
                continue
            known = True
            keep[i] = tail <= budget
    if known and not keep.any():
        raise TruncationBudgetExceeded(
            f"{kernel.kind} kernel leaves more than {budget:g} of its mass outside "
            f"[{grid.a:g}, {grid.b:g}] from every grid point"
        )
    if not known and not kernel.has_symbol and not isinstance(kernel, TabulatedKernel):
        raise TruncationBudgetExceeded(f"{kernel.kind} kernel reports no tail bound")
    return keep


def check_chapman_kolmogorov(kernel, grid, t, s, budget=DEFAULT_BUDGET):
    """Max over core grid rows and all columns of the compatibility defect.

    Returns ``max |int p(x, z, t - s) p(z, y, s) dz - p(x, y, t)|`` with the
    trapezoid rule in ``z``. Rows ``x`` from which the kernel at times
    ``t - s`` or ``t`` loses more than ``budget`` of its mass off the grid are
    excluded; if none remain, ``TruncationBudgetExceeded`` is raised.
    Dispersive kernels with unbounded spread report ``inf``.
    """
    if not (0 < s < t):
        raise ValueError(f"need 0 < s < t, got s={s}, t={t}")
    if getattr(kernel, "dispersive", False):
        return float("inf")
    core = _core_rows(kernel, grid, (t - s, t), budget)
    qw = grid.h * grid.weights
    first = kernel.grid_matrix(grid, t - s)[core]
    second = kernel.grid_matrix(grid, s)
    direct = kernel.grid_matrix(grid, t)[core]
    composed = (first * qw[None, :]) @ second
    return float(np.max(np.abs(composed - direct)))


def check_normalization(kernel, grid, t, x=None, budget=DEFAULT_BUDGET):
    """``|int p(x, y, t) dy - 1|`` at ``x`` (grid centre by default)."""
    if x is None:
        x = grid.points[grid.centre_index]
    tail = kernel.tail_outside(x, t, grid.a, grid.b)
    if tail is not None and tail > budget:
        raise TruncationBudgetExceeded(f"mass {tail:.3e} of the kernel row lies outside the grid")
    row = Field(grid, kernel.row(grid, x, t), "complex")
    return float(abs(grid.h * np.dot(grid.weights, row.values) - 1.0))


def check_delta_limit(kernel, test_function, delta_sequence, x=None):
    """``|int p(x, y, delta) g(y) dy - g(x)|`` for each ``delta`` (grid centre by default).

    ``delta_sequence`` must be strictly decreasing and positive.
    """
    deltas = [float(d) for d in delta_sequence]
    if any(d <= 0 for d in deltas):
        raise NonPositiveTime("delta times must be > 0")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta sequence must be strictly decreasing")
    grid = test_function.grid
    if x is None:
        x = grid.points[grid.centre_index]
    gx = np.interp(x, grid.points, test_function.values.real) + 1j * np.interp(
        x, grid.points, test_function.values.imag
    )
    errors = []
    for d in deltas:
        row = kernel.row(grid, x, d)
        smoothed = grid.h * np.dot(grid.weights, row * test_function.values)
        errors.append(float(abs(smoothed - gx)))
    return errors


@dataclass(frozen=True)
class Potential:
    """Multiplicative perturbation ``V(x)`` with bound metadata.

    ``inf_estimate`` and ``sup_estimate`` are bounds over the whole line
    (``-inf`` / ``inf`` when unknown or unbounded). Solvers that need a
    finite action range use the extreme values on their grid instead.
    """

    evaluator: Callable
    inf_estimate: float = -np.inf
    sup_estimate: float = np.inf
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inf_estimate > self.sup_estimate:
            raise ValueError("inf_estimate exceeds sup_estimate")

    @property
    def bounded_below(self):
        return bool(np.isfinite(self.inf_estimate))

    @property
    def bounded_above(self):
        return bool(np.isfinite(self.sup_estimate))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(np.asarray(self.evaluator(x), dtype=np.float64), x.shape).copy()

    def on_grid(self, grid):
        """Values on the grid; raises ``PotentialOverflow`` if any is not finite."""
        v = self(grid.points)
        if not np.all(np.isfinite(v)):
            raise PotentialOverflow(f"potential {self.name} is not finite on the grid")
        return v

    def grid_range(self, grid):
        v = self.on_grid(grid)
        return float(v.min()), float(v.max())

    def is_constant(self):
        return self.inf_estimate == self.sup_estimate

    def describe(self):
        return {"name": self.name, **self.params}

    @classmethod
    def zero(cls):
        return cls(lambda x: np.zeros_like(x), 0.0, 0.0, "zero", {})

    @classmethod
    def constant(cls, c):
        c = float(c)
        return cls(lambda x: np.full_like(x, c), c, c, "constant", {"c": c})

    @classmethod
    def harmonic(cls, omega=1.0):
        """``omega^2 x^2 / 2``."""
        omega = float(omega)
        return cls(lambda x: 0.5 * omega**2 * x * x, 0.0, np.inf, "harmonic", {"omega": omega})

    @classmethod
    def linear(cls, slope=1.0):
        slope = float(slope)
        lo, hi = (0.0, 0.0) if slope == 0 else (-np.inf, np.inf)
        return cls(lambda x: slope * x, lo, hi, "linear", {"slope": slope})

    @classmethod
    def table(cls, x, v):
        """Piecewise-linear potential through ``(x, v)``, constant beyond the ends."""
        x = np.asarray(x, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("table needs increasing x and matching v with at least 2 nodes")
        xs, vs = x.copy(), v.copy()
        return cls(
            lambda q: np.interp(q, xs, vs),
            float(vs.min()),
            float(vs.max()),
            "table",
            {"x": xs.tolist(), "v": vs.tolist()},
        )

    @classmethod
    def from_callable(cls, fn, inf_estimate=-np.inf, sup_estimate=np.inf, name="custom"):
        return cls(fn, float(inf_estimate), float(sup_estimate), name, {})

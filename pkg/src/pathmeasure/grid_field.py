"""Uniform 1D grids, sampled fields and kernel transport on them.

All integrals over space use the trapezoid rule on the grid. A kernel is
applied either by direct quadrature against its grid samples (O(n^2)) or by
a discrete Fourier multiplier on the periodic extension of the grid
(O(n log n)); the latter needs a kernel with a symbol and a tail small
enough that wrap-around is negligible.
"""
import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from . import _accel
from .errors import NoSymbol, TruncationBudgetExceeded

DEFAULT_BUDGET = 1e-10

__all__ = [
    "DEFAULT_BUDGET",
    "Field",
    "FieldHistory",
    "LagStack",
    "SpatialGrid",
    "TransferOperator",
    "apply_generator",
    "apply_kernel",
    "field_from_dict",
    "field_to_dict",
    "quadrature",
    "read_field_csv",
    "relative_l2",
    "write_field_csv",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Points ``a + j h`` for ``j = 0 .. n-1`` with ``h = (b - a) / (n - 1)``."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("grid endpoints must be finite")
        if not self.b > self.a:
            raise ValueError(f"grid needs b > a, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 points, got n={self.n}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self):
        return (self.b - self.a) / (self.n - 1)

    @property
    def points(self):
        return self.a + self.h * np.arange(self.n)

    @property
    def weights(self):
        """Trapezoid weights (without the factor h)."""
        w = np.ones(self.n)
        w[0] = w[-1] = 0.5
        return w

    @property
    def wavenumbers(self):
        """Angular wavenumbers of the periodic extension, FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @property
    def centre_index(self):
        return (self.n - 1) // 2

    def index_of(self, x):
        """Index of the grid point ``x``; raises if ``x`` is not on the grid."""
        j = int(round((x - self.a) / self.h))
        if j < 0 or j >= self.n or abs(self.a + j * self.h - x) > 1e-9 * self.h:
            raise ValueError(f"{x!r} is not a point of {self}")
        return j

    def to_dict(self):
        return {"a": self.a, "b": self.b, "n": self.n}

    @classmethod
    def from_dict(cls, d):
        return cls(d["a"], d["b"], d["n"])


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a (possibly complex) function on a grid.

    Values are always stored as complex128; ``scalar_kind='real'`` asserts
    that the imaginary parts are exactly zero.
    """

    grid: SpatialGrid
    values: np.ndarray
    scalar_kind: str = "complex"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n,):
            raise ValueError(f"field needs {self.grid.n} values, got shape {v.shape}")
        if self.scalar_kind not in ("real", "complex"):
            raise ValueError(f"unknown scalar kind {self.scalar_kind!r}")
        if self.scalar_kind == "real" and np.any(v.imag != 0.0):
            raise ValueError("real field has nonzero imaginary parts")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn, scalar_kind="real"):
        return cls(grid, np.asarray(fn(grid.points)), scalar_kind)

    @classmethod
    def zeros(cls, grid, scalar_kind="real"):
        return cls(grid, np.zeros(grid.n), scalar_kind)

    @classmethod
    def delta(cls, grid, y):
        """Discrete delta: ``1/h`` at the grid point ``y``."""
        v = np.zeros(grid.n)
        v[grid.index_of(y)] = 1.0 / grid.h
        return cls(grid, v, "real")

    @property
    def real(self):
        return self.values.real.copy()

    def with_values(self, values, scalar_kind=None):
        """New field on the same grid; real kind is dropped if imaginary parts appear."""
        values = np.asarray(values)
        kind = scalar_kind
        if kind is None:
            real = not np.iscomplexobj(values) or not np.any(values.imag)
            kind = "real" if (self.scalar_kind == "real" and real) else "complex"
        return Field(self.grid, values, kind)

    def realified(self):
        """Drop the imaginary part (for results of real kernels on real data)."""
        return Field(self.grid, self.values.real, "real")

    def l2_norm(self, periodic=False):
        """Discrete L2 norm; trapezoid weights, or uniform weights when ``periodic``.

        The uniform-weight norm is the one preserved exactly by unit-modulus
        Fourier multipliers on the periodic grid.
        """
        g = self.grid
        w = 1.0 if periodic else g.weights
        return float(np.sqrt(g.h * np.sum(w * np.abs(self.values) ** 2)))

    def __add__(self, other):
        return self.with_values(self.values + _values(other))

    def __sub__(self, other):
        return self.with_values(self.values - _values(other))

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


def _values(f):
    return f.values if isinstance(f, Field) else np.asarray(f)


def quadrature(field):
    """Trapezoid integral of a field over its grid."""
    g = field.grid
    return complex(g.h * np.dot(g.weights, field.values))


def relative_l2(a, b):
    """``||a - b|| / ||b||`` in the discrete trapezoid L2 norm."""
    fa, fb = (x if isinstance(x, Field) else None for x in (a, b))
    grid = (fa or fb).grid
    va, vb = _values(a), _values(b)
    w = grid.weights
    num = np.sqrt(np.sum(w * np.abs(va - vb) ** 2))
    den = np.sqrt(np.sum(w * np.abs(vb) ** 2))
    return float(num / den)


def resolve_method(kernel, method):
    if method is None:
        return "spectral" if kernel.has_symbol else "direct"
    if method not in ("direct", "spectral"):
        raise ValueError(f"method must be 'direct' or 'spectral', got {method!r}")
    if method == "spectral" and not kernel.has_symbol:
        raise NoSymbol(f"{kernel.kind} kernel has no Fourier multiplier; use method='direct'")
    return method


def guard_wraparound(kernel, grid, dt, budget=DEFAULT_BUDGET):
    """Reject kernels whose mass beyond half the domain exceeds ``budget``.

    Kernels without a meaningful tail (dispersive symbols, tables) report
    ``None`` and are not checked.
    """
    tail = kernel.spread_tail(0.5 * (grid.b - grid.a), dt)
    if tail is not None and tail > budget:
        raise TruncationBudgetExceeded(
            f"{kernel.kind} kernel at dt={dt:g} has tail mass {tail:.3e} beyond half the "
            f"domain [{grid.a:g}, {grid.b:g}] (budget {budget:g})"
        )
    return tail


class TransferOperator:
    """``f -> int p(., y, dt) f(y) dy`` on a grid, ready for repeated use.

    Accepts arrays of shape (n,) or (n, B); the second axis is transported
    layer by layer.
    """

    def __init__(self, kernel, grid, dt, method=None, budget=DEFAULT_BUDGET):
        if not dt > 0:
            raise ValueError(f"transport needs dt > 0, got {dt}")
        self.kernel = kernel
        self.grid = grid
        self.dt = dt
        self.method = resolve_method(kernel, method)
        self.tail = guard_wraparound(kernel, grid, dt, budget)
        self._real_ok = kernel.is_real
        if self.method == "spectral":
            k = grid.wavenumbers
            kernel.check_band(k)
            self._mult = kernel.multiplier(k, dt)
            if self._real_ok:
                self._rmult = kernel.multiplier(2.0 * np.pi * np.fft.rfftfreq(grid.n, d=grid.h), dt)
        else:
            self._matrix = kernel.grid_matrix(grid, dt) * (grid.h * grid.weights)[None, :]
            if self._real_ok:
                self._rmatrix = np.ascontiguousarray(self._matrix.real)

    def __call__(self, values):
        """Transport ``values``; real input to a real kernel stays real."""
        values = np.asarray(values)
        if self._real_ok and not np.iscomplexobj(values):
            values = values.astype(np.float64, copy=False)
            if self.method == "spectral":
                m = self._rmult if values.ndim == 1 else self._rmult[:, None]
                return sfft.irfft(m * sfft.rfft(values, axis=0), n=self.grid.n, axis=0)
            return self._rmatrix @ values
        values = values.astype(np.complex128, copy=False)
        if self.method == "spectral":
            m = self._mult if values.ndim == 1 else self._mult[:, None]
            return sfft.ifft(m * sfft.fft(values, axis=0), axis=0)
        return self._matrix @ values


def apply_kernel(field, kernel, dt, method="direct", budget=DEFAULT_BUDGET):
    """Return ``g(x) = int p(x, y, dt) f(y) dy`` on the field's grid."""
    op = TransferOperator(kernel, field.grid, dt, method, budget)
    values = field.values.real if field.scalar_kind == "real" else field.values
    out = op(values)
    if field.scalar_kind == "real" and kernel.is_real:
        return Field(field.grid, out.real, "real")
    return Field(field.grid, out, "complex")


def apply_generator(field, kernel):
    """Spectral evaluation of ``A f`` where ``A`` generates the kernel's semigroup."""
    k = field.grid.wavenumbers
    out = sfft.ifft(-kernel.symbol(k) * sfft.fft(field.values))
    if field.scalar_kind == "real" and kernel.is_real:
        return Field(field.grid, out.real, "real")
    return Field(field.grid, out, "complex")


@dataclass(frozen=True, eq=False)
class FieldHistory:
    """A field sampled on the uniform time grid ``times[m] = m * t / M``."""

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray  # shape (M + 1, n)

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def ds(self):
        return self.times[-1] / self.steps

    def at(self, m):
        return Field(self.grid, self.values[m].real, "real")

    def final(self):
        return self.at(self.steps)


class LagStack:
    """Transport by ``lag * ds`` for every lag up to ``max_lag``.

    Supports the weighted lag sums ``sum_{j<m} w_j e^{(m-j) ds A} g_j`` that
    drive the Volterra and Dyson recurrences. Real kernels only.

    * spectral: exact discrete semigroup on the periodic grid (rfft).
    * direct, convolution kernels: zero-padded Toeplitz products via FFT,
      identical to trapezoid quadrature against the sampled kernel.
    * direct, two-point kernels: one dense matrix per lag.
    """

    _DENSE_LIMIT = 2.5e7  # matrix entries kept in memory

    def __init__(self, kernel, grid, ds, max_lag, method=None, budget=DEFAULT_BUDGET):
        if not kernel.is_real:
            raise ValueError(f"{kernel.kind} kernel is not real-valued; lag sums need a real kernel")
        self.kernel = kernel
        self.grid = grid
        self.ds = ds
        self.max_lag = max_lag
        self.method = resolve_method(kernel, method)
        n = grid.n
        guard_wraparound(kernel, grid, max_lag * ds, budget)
        self._qw = grid.h * grid.weights
        lags = np.arange(max_lag + 1) * ds
        if self.method == "spectral":
            self.mode = "spectral"
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.h)
            kernel.check_band(k)
            self._hat = np.empty((max_lag + 1, k.size), dtype=np.complex128)
            self._hat[0] = 1.0
            for L in range(1, max_lag + 1):
                self._hat[L] = kernel.multiplier(k, lags[L])
        elif kernel.form == "convolution":
            self.mode = "toeplitz"
            self._P = sfft.next_fast_len(3 * n - 2, real=True)
            self._hat = np.zeros((max_lag + 1, self._P // 2 + 1), dtype=np.complex128)
            for L in range(1, max_lag + 1):
                offs = kernel.grid_offsets(grid, lags[L]).real
                self._hat[L] = sfft.rfft(offs, n=self._P)
        else:
            self.mode = "dense"
            if (max_lag + 1) * n * n > self._DENSE_LIMIT:
                raise MemoryError(
                    f"dense lag stack needs {(max_lag + 1) * n * n:.3g} entries; reduce n or the "
                    "number of time steps for two-point kernels"
                )
            self._mats = [None] + [kernel.grid_matrix(grid, lags[L]).real for L in range(1, max_lag + 1)]

    def transform(self, values):
        """Map rows of real values (time, n) to the representation used by ``accumulate``."""
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if self.mode == "spectral":
            return sfft.rfft(values, axis=-1)
        weighted = values * self._qw
        if self.mode == "toeplitz":
            return sfft.rfft(weighted, n=self._P, axis=-1)
        return weighted

    def accumulate(self, hat, weights, m):
        """``sum_{j<m} weights[j] * e^{(m-j) ds A} g_j`` as a real array of length n."""
        n = self.grid.n
        if self.mode == "dense":
            acc = np.zeros(n)
            for j in range(m):
                if weights[j] != 0.0:
                    acc += weights[j] * (self._mats[m - j] @ hat[j])
            return acc
        acc = _accel.lag_accumulate(self._hat, hat, weights, m)
        if self.mode == "spectral":
            return sfft.irfft(acc, n=n)
        return sfft.irfft(acc, n=self._P)[n - 1 : 2 * n - 1]

    def apply(self, hat_row, lag):
        """``e^{lag ds A}`` applied to one transformed row (lag >= 1)."""
        n = self.grid.n
        if self.mode == "dense":
            return self._mats[lag] @ hat_row
        if self.mode == "spectral":
            return sfft.irfft(self._hat[lag] * hat_row, n=n)
        return sfft.irfft(self._hat[lag] * hat_row, n=self._P)[n - 1 : 2 * n - 1]

    def propagate(self, values, lag):
        """``e^{lag ds A} f`` for one real field (lag >= 1)."""
        return self.apply(self.transform(values)[0], lag)


def field_to_dict(field):
    return {
        "grid": field.grid.to_dict(),
        "scalar_kind": field.scalar_kind,
        "re": field.values.real.tolist(),
        "im": field.values.imag.tolist(),
    }


def field_from_dict(d):
    grid = SpatialGrid.from_dict(d["grid"])
    values = np.asarray(d["re"], dtype=np.float64) + 1j * np.asarray(d["im"], dtype=np.float64)
    return Field(grid, values, d.get("scalar_kind", "complex"))


def field_to_json(field):
    return json.dumps(field_to_dict(field))


def field_from_json(text):
    return field_from_dict(json.loads(text))


def write_field_csv(field, dest):
    """Write columns ``x, re, im`` with round-trip precision.

    ``dest`` is a path or a text stream.
    """
    rows = zip(field.grid.points, field.values.real, field.values.imag)
    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        with open(dest, "w", newline="") as fh:
            _write_rows(fh, rows)
    else:
        _write_rows(dest, rows)


def _write_rows(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "re", "im"])
    for x, re, im in rows:
        w.writerow([repr(float(x)), repr(float(re)), repr(float(im))])


def read_field_csv(src, scalar_kind=None):
    """Read a field written by ``write_field_csv``; the grid is rebuilt from the x column."""
    if isinstance(src, (str, bytes)) or hasattr(src, "__fspath__"):
        with open(src, newline="") as fh:
            text = fh.read()
    else:
        text = src.read()
    reader = csv.DictReader(io.StringIO(text))
    xs, re, im = [], [], []
    for row in reader:
        xs.append(float(row["x"]))
        re.append(float(row["re"]))
        im.append(float(row["im"]))
    grid = SpatialGrid(xs[0], xs[-1], len(xs))
    values = np.asarray(re) + 1j * np.asarray(im)
    if scalar_kind is None:
        scalar_kind = "real" if not np.any(np.asarray(im)) else "complex"
    return Field(grid, values, scalar_kind)

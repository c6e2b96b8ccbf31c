"""Perturbative expansion of the perturbed kernel in powers of ``V``.

The terms ``K^n(., s)`` obey, on the uniform time grid ``s_m = m ds``,

    K^{n+1}(s_m) = (n + 1) * [ ds * sum_{j<m} w_j e^{(s_m - s_j) A} (V K^n(s_j))
                               + (ds / 2) V K^n(s_m) ],

with trapezoid weights ``w_0 = 1/2``, ``w_j = 1`` and ``K^{n+1}(s_0) = 0``;
the ``s_j = s_m`` node uses the fact that the kernel at time zero is the
identity. The perturbed kernel is ``sum_n (-1)^n / n! K^n``.

The series converges for any bounded ``V`` but its terms grow like
``(t sup|V|)^n / n!`` before decaying, so large ``t sup|V|`` amplifies
round-off. ``dyson_sum`` therefore splits ``[0, t]`` into segments with
``tau sup|V| <= split_threshold`` and chains them.
"""
import csv
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .grid_field import DEFAULT_BUDGET, Field, FieldHistory, LagStack, SpatialGrid, quadrature

__all__ = [
    "DysonSeries",
    "DysonSum",
    "base_history",
    "dyson_next_term",
    "dyson_series",
    "dyson_sum",
    "remainder_bound",
    "scattering_report",
    "write_scattering_csv",
]


def _require_positive(kernel):
    if not kernel.positivity:
        raise ValueError(
            f"{kernel.kind} kernel is not positive; the perturbative series is only "
            "implemented for positive kernels"
        )


def _grid_sup_abs(V, grid):
    vals = V.on_grid(grid)
    return vals, float(np.max(np.abs(vals))), float(max(0.0, -vals.min()))


def remainder_bound(t, sup_abs_v, order, mass=1.0, neg_part=0.0):
    """``(t sup|V|)^(M+1) / (M+1)! * e^{t max(0, -inf V)} * mass``.

    Lagrange remainder of the exponential series; ``mass`` is the L1 norm
    of the unperturbed column. With ``V >= 0`` the exponential factor is 1.
    """
    r = t * sup_abs_v
    log_term = (order + 1) * math.log(r) - math.lgamma(order + 2) if r > 0 else -math.inf
    return float(math.exp(log_term + t * neg_part) * mass) if r > 0 else 0.0


def _weights(M):
    w = np.ones(M + 1)
    w[0] = 0.5
    return w


def base_history(kernel, grid, f0, t, M, method=None, budget=DEFAULT_BUDGET, lag=None):
    """``K^0(s_m) = e^{s_m A} f0`` on ``s_m = m t / M``."""
    lag = lag or LagStack(kernel, grid, t / M, M, method, budget)
    f0 = np.asarray(f0.values.real if isinstance(f0, Field) else f0, dtype=np.float64)
    vals = np.empty((M + 1, grid.n))
    vals[0] = f0
    hat = lag.transform(f0)[0]
    for m in range(1, M + 1):
        vals[m] = lag.apply(hat, m)
    times = t * np.arange(M + 1) / M
    times[-1] = t
    return FieldHistory(grid, times, vals)


def dyson_next_term(kernel, V, Kn, n, method=None, budget=DEFAULT_BUDGET, lag=None):
    """``K^{n+1}`` on the time grid of ``Kn`` (a ``FieldHistory`` of ``K^n``)."""
    grid = Kn.grid
    M = Kn.steps
    ds = Kn.ds
    lag = lag or LagStack(kernel, grid, ds, M, method, budget)
    vals = V.on_grid(grid)
    src = vals * Kn.values.real
    hat = lag.transform(src)
    w = _weights(M)
    out = np.zeros((M + 1, grid.n))
    for m in range(1, M + 1):
        out[m] = (n + 1) * (ds * lag.accumulate(hat, w, m) + 0.5 * ds * src[m])
    return FieldHistory(grid, Kn.times, out)


@dataclass
class DysonSeries:
    """Terms ``K^0 .. K^M`` at the final time of one segment (stored unscaled)."""

    order: int
    terms: List[Field]
    y: float
    t: float
    remainder_bound: float
    grid: SpatialGrid
    time_steps: int
    segments: int = 1
    column_mass: float = 1.0
    sup_abs_v: float = 0.0

    def partial_sum(self, order=None):
        order = self.order if order is None else order
        total = np.zeros(self.grid.n)
        for n in range(order + 1):
            total += (-1) ** n / math.factorial(n) * self.terms[n].values.real
        return Field(self.grid, total, "real")

    def contributions(self):
        """Signed column masses ``(-1)^n / n! * int K^n dx``."""
        return [
            (-1) ** n / math.factorial(n) * quadrature(term).real for n, term in enumerate(self.terms)
        ]


def _run_segment(lag, vals, f0, order, M):
    """Terms of one segment started from the field ``f0``; returns final-time values."""
    grid = lag.grid
    ds = lag.ds
    K = np.empty((M + 1, grid.n))
    K[0] = f0
    hat0 = lag.transform(f0)[0]
    for m in range(1, M + 1):
        K[m] = lag.apply(hat0, m)
    finals = [K[M].copy()]
    w = _weights(M)
    for n in range(order):
        src = vals * K
        hat = lag.transform(src)
        nxt = np.zeros_like(K)
        for m in range(1, M + 1):
            nxt[m] = (n + 1) * (ds * lag.accumulate(hat, w, m) + 0.5 * ds * src[m])
        K = nxt
        finals.append(K[M].copy())
    return finals


def dyson_series(kernel, V, y, t, order, grid, time_steps, method=None, budget=DEFAULT_BUDGET):
    """All terms up to ``order`` for a single segment ``[0, t]`` from a delta at ``y``."""
    _require_positive(kernel)
    if order < 0 or time_steps < 1:
        raise ValueError("need order >= 0 and time_steps >= 1")
    vals, sup_abs, neg = _grid_sup_abs(V, grid)
    lag = LagStack(kernel, grid, t / time_steps, time_steps, method, budget)
    delta = Field.delta(grid, y).values.real
    finals = _run_segment(lag, vals, delta, order, time_steps)
    terms = [Field(grid, f, "real") for f in finals]
    mass = float(grid.h * np.dot(grid.weights, np.abs(finals[0])))
    bound = remainder_bound(t, sup_abs, order, mass, neg)
    return DysonSeries(order, terms, float(y), float(t), bound, grid, time_steps, 1, mass, sup_abs)


class DysonSum(tuple):
    """``(field, remainder_bound)`` with the segment count and step counts attached."""

    def __new__(cls, field, bound, segments, steps_per_segment):
        obj = super().__new__(cls, (field, bound))
        obj.segments = segments
        obj.steps_per_segment = steps_per_segment
        return obj

    @property
    def field(self):
        return self[0]

    @property
    def remainder_bound(self):
        return self[1]


def dyson_sum(
    kernel,
    V,
    y,
    t,
    order,
    grid,
    time_steps,
    method=None,
    budget=DEFAULT_BUDGET,
    segments="auto",
    split_threshold=2.0,
):
    """Truncated series ``sum_{n<=order} (-1)^n / n! K^n(., t)`` and its remainder bound.

    Parameters
    ----------
    segments : int or 'auto'
        Number of equal time segments. ``'auto'`` uses
        ``ceil(t * sup|V| / split_threshold)`` with ``sup|V|`` taken over the
        grid. Each segment restarts the series from the previous result and
        uses ``ceil(time_steps / segments)`` steps.

    Notes
    -----
    The bound is grid-relative: ``sup|V|`` is the maximum over the grid. For
    ``S`` segments with per-segment bound ``e`` it is
    ``S * e * (e^{tau max(0, -inf V)} + e)^(S-1)`` times the column mass.
    """
    _require_positive(kernel)
    if order < 0 or time_steps < 1:
        raise ValueError("need order >= 0 and time_steps >= 1")
    vals, sup_abs, neg = _grid_sup_abs(V, grid)
    if segments == "auto":
        S = max(1, math.ceil(t * sup_abs / split_threshold))
    else:
        S = int(segments)
        if S < 1:
            raise ValueError(f"segments must be >= 1, got {segments}")
    steps = max(1, math.ceil(time_steps / S))
    tau = t / S
    lag = LagStack(kernel, grid, tau / steps, steps, method, budget)
    f = Field.delta(grid, y).values.real
    coeffs = [(-1) ** n / math.factorial(n) for n in range(order + 1)]
    for _ in range(S):
        finals = _run_segment(lag, vals, f, order, steps)
        f = sum(c * term for c, term in zip(coeffs, finals))
    mass = float(grid.h * np.dot(grid.weights, np.abs(base_history(kernel, grid, Field.delta(grid, y), t, 1, method, budget).values[1])))
    e = remainder_bound(tau, sup_abs, order, 1.0, neg)
    growth = math.exp(tau * neg) + e
    bound = S * e * growth ** (S - 1) * mass
    return DysonSum(Field(grid, f, "real"), float(bound), S, steps)


def scattering_report(series):
    """Rows ``(order, contribution, cumulative, remainder_bound)`` per term.

    ``contribution`` is the signed column mass of the order-``n`` term, the
    ``n``-fold scattering part; ``remainder_bound`` bounds what the orders
    beyond ``n`` can still add.
    """
    rows = []
    cumulative = 0.0
    for n, c in enumerate(series.contributions()):
        cumulative += c
        bound = remainder_bound(series.t, series.sup_abs_v, n, series.column_mass)
        rows.append({"order": n, "contribution": c, "cumulative": cumulative, "remainder_bound": bound})
    return rows


def write_scattering_csv(rows, dest):
    """CSV with columns ``order, contribution, cumulative, remainder_bound``."""
    cols = ["order", "contribution", "cumulative", "remainder_bound"]

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r["order"]] + [repr(float(r[c])) for c in cols[1:]])

    if hasattr(dest, "write"):
        emit(dest)
    else:
        with open(dest, "w", newline="") as fh:
            emit(fh)

"""Monte Carlo path functionals under the pinned heat-kernel measure.

Paths are Brownian bridges from ``x`` at time 0 to ``y`` at time ``t`` with
generator ``D d^2/dx^2`` (increment variance ``2 D dt``). The measure has
total mass ``phi(x - y, t)``, which multiplies the path average.

Reproducibility: paths are grouped in fixed blocks of ``block_size``
indices; block ``b`` draws from ``Philox`` seeded by
``SeedSequence(seed, spawn_key=(b,))``. Block statistics are merged by a
fixed pairwise tree, so the estimate does not depend on how many workers
ran the blocks.
"""
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _accel
from .errors import UnboundedComposite

__all__ = [
    "EXP_NEG",
    "ONE",
    "McEstimate",
    "PathFunctional",
    "PathSample",
    "block_stream",
    "mc_functional",
    "sample_bridge",
    "sample_bridges",
    "write_paths_csv",
]

DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class PathSample:
    """A pinned discrete path on the uniform time grid ``times``."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        if self.times.shape != self.positions.shape or self.times.size < 2:
            raise ValueError("a path needs matching times and positions with at least 2 points")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("path times must be strictly increasing")

    @property
    def M(self):
        return self.times.size - 1


@dataclass(frozen=True)
class PathFunctional:
    """Weight ``f(action)`` with its monotonicity class.

    ``kind`` is one of 'bounded', 'increasing', 'decreasing'; it certifies
    that ``f(int V)`` is bounded together with the bounds of ``V``.
    """

    fn: Callable
    kind: str

    def __post_init__(self):
        if self.kind not in ("bounded", "increasing", "decreasing"):
            raise ValueError(f"unknown functional kind {self.kind!r}")

    def __call__(self, s):
        return self.fn(s)


def _one(s):
    return np.ones_like(s)


def _exp_neg(s):
    return np.exp(-s)


ONE = PathFunctional(_one, "bounded")
EXP_NEG = PathFunctional(_exp_neg, "decreasing")


def block_stream(seed, block):
    """Random generator for block ``block`` of the run seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _check_bridge_args(t, M, D):
    if not t > 0:
        raise ValueError(f"bridge time must be > 0, got {t}")
    if int(M) != M or M < 1:
        raise ValueError(f"bridge needs M >= 1 steps, got {M}")
    if not D > 0:
        raise ValueError(f"diffusion coefficient must be > 0, got {D}")


def sample_bridge(x, y, t, M, D, stream):
    """One Brownian bridge with ``M`` steps drawn from ``stream``."""
    _check_bridge_args(t, M, D)
    z = stream.standard_normal((1, M - 1))
    pos = _accel.bridge_fill(z, x, y, t, D)[0]
    return PathSample(t * np.arange(M + 1) / M, pos)


def _block_paths(x, y, t, M, D, seed, block, count):
    z = block_stream(seed, block).standard_normal((count, M - 1))
    return _accel.bridge_fill(z, x, y, t, D)


def _blocks(n_paths, block_size):
    full, rest = divmod(n_paths, block_size)
    sizes = [block_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def sample_bridges(x, y, t, M, D, n_paths, seed, block_size=DEFAULT_BLOCK):
    """``n_paths`` bridges as an array of shape (n_paths, M + 1)."""
    _check_bridge_args(t, M, D)
    parts = [_block_paths(x, y, t, M, D, seed, b, c) for b, c in _blocks(n_paths, block_size)]
    return np.vstack(parts)


def write_paths_csv(paths, t, dest):
    """Columns ``path_id, time, position``; ``paths`` has shape (P, M + 1)."""
    paths = np.atleast_2d(paths)
    times = t * np.arange(paths.shape[1]) / (paths.shape[1] - 1)

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "time", "position"])
        for i, row in enumerate(paths):
            for s, p in zip(times, row):
                w.writerow([i, repr(float(s)), repr(float(p))])

    if hasattr(dest, "write"):
        emit(dest)
    else:
        with open(dest, "w", newline="") as fh:
            emit(fh)


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_paths: int
    seed: int
    normalization: float
    params: dict

    def to_dict(self):
        return {
            "value": self.value,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "normalization": self.normalization,
            "params": self.params,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _certify(kind, V):
    if kind == "bounded":
        return
    if kind == "increasing" and V.bounded_above:
        return
    if kind == "decreasing" and V.bounded_below:
        return
    raise UnboundedComposite(
        f"cannot certify a bounded path functional: f is {kind or 'uncertified'}, potential "
        f"{V.name} has inf {V.inf_estimate} and sup {V.sup_estimate}. Need f bounded, f increasing "
        "with V bounded above, or f decreasing with V bounded below"
    )


def _merge(a, b):
    """Chan et al. pairwise merge of (count, mean, M2)."""
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta * delta * (na * nb / n)


def _tree_reduce(stats):
    while len(stats) > 1:
        nxt = [_merge(stats[i], stats[i + 1]) for i in range(0, len(stats) - 1, 2)]
        if len(stats) % 2:
            nxt.append(stats[-1])
        stats = nxt
    return stats[0]


def _heat_density(x, y, t, D):
    d = x - y
    return float(np.exp(-d * d / (4.0 * D * t)) / np.sqrt(4.0 * np.pi * D * t))


def mc_functional(x, y, t, D, V, f, n_paths, M, seed, f_kind=None, workers=1, block_size=DEFAULT_BLOCK):
    """Estimate the pinned-path integral of ``f(int_0^t V(gamma(s)) ds)``.

    The action is the midpoint Riemann sum ``sum_k V(gamma(t_k + dt/2)) dt``
    with ``dt = t / M``; bridges are sampled on ``2M`` sub-steps so that the
    midpoints are exact bridge points.

    Parameters
    ----------
    f : PathFunctional or callable
        A plain callable needs ``f_kind`` ('bounded', 'increasing', 'decreasing').
    workers : int
        Threads used for blocks; the result does not depend on it.

    Returns
    -------
    McEstimate
        ``value = phi(x - y, t) * mean(f)``; ``stderr`` is
        ``phi(x - y, t) * sd(f) / sqrt(n_paths)``, exactly 0 when all samples agree.
    """
    _check_bridge_args(t, M, D)
    if int(n_paths) != n_paths or n_paths < 2:
        raise ValueError(f"need at least 2 paths, got {n_paths}")
    kind = f.kind if isinstance(f, PathFunctional) else f_kind
    _certify(kind, V)
    norm = _heat_density(x, y, t, D)
    dt = t / M

    def block(args):
        b, count = args
        paths = _block_paths(x, y, t, 2 * M, D, seed, b, count)
        mids = paths[:, 1::2]
        action = V(mids).sum(axis=1) * dt
        g = np.asarray(f(action), dtype=np.float64)
        if np.all(g == g[0]):
            return count, float(g[0]), 0.0
        mean = g.mean()
        return count, mean, float(np.sum((g - mean) ** 2))

    jobs = _blocks(int(n_paths), int(block_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(block, jobs))
    else:
        stats = [block(j) for j in jobs]
    n, mean, m2 = _tree_reduce(stats)
    stderr = 0.0 if m2 == 0.0 else norm * float(np.sqrt(m2 / (n - 1) / n))
    params = {"x": x, "y": y, "t": t, "D": D, "M": M, "block_size": block_size, "potential": V.describe()}
    return McEstimate(norm * float(mean), stderr, int(n), int(seed), norm, params)

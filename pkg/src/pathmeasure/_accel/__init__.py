"""Hot inner loops with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise, or
when ``PATHMEASURE_PURE_PYTHON`` is set to a non-empty value, the numpy
versions in ``_pykernels`` are used. Both expose the same four functions.
"""
import os

import numpy as np

from . import _pykernels

__all__ = [
    "BACKEND",
    "available_backends",
    "backend",
    "bridge_fill",
    "lag_accumulate",
    "shift_deposit",
    "tridiag_solve",
]

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("PATHMEASURE_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_impl = _BACKENDS[BACKEND]


def available_backends():
    return tuple(_BACKENDS)


def backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {available_backends()}") from None


def _c(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def lag_accumulate(lag, g, w, m):
    """``sum_{j<m} w[j] * lag[m - j] * g[j]``; rows of ``lag`` are indexed by lag."""
    return _impl.lag_accumulate(_c(lag, np.complex128), _c(g, np.complex128), _c(w, np.float64), int(m))


def bridge_fill(z, x, y, t, D):
    return _impl.bridge_fill(_c(z, np.float64), float(x), float(y), float(t), float(D))


def tridiag_solve(lower, diag, upper, rhs):
    f = np.float64
    return _impl.tridiag_solve(_c(lower, f), _c(diag, f), _c(upper, f), _c(rhs, f))


def shift_deposit(w, shift):
    return _impl.shift_deposit(_c(w, np.complex128), _c(shift, np.float64))

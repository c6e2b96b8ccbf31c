"""Functional measures from transition kernels and four routes to perturbed
fundamental solutions: time slicing, Dyson series, Volterra marching and
pinned-path Monte Carlo."""
from . import _accel
from .errors import *  # noqa: F401,F403
from .grid_field import Field, FieldHistory, SpatialGrid, apply_kernel, quadrature, relative_l2
from .kernel_core import (
    HeatKernel,
    OUKernel,
    Potential,
    SpectralKernel,
    TabulatedKernel,
    check_chapman_kolmogorov,
    check_delta_limit,
    check_normalization,
    eval_kernel,
    kernel_multiplier,
    lagrangian_to_kernel,
)

__version__ = "0.1.0"
BACKEND = _accel.BACKEND

import ast
import math
from pathlib import Path

import numpy as np
import pytest

import pathmeasure.oracles as oracles_mod
from pathmeasure import Field, OUKernel, SpatialGrid, eval_kernel
from pathmeasure.errors import BoundaryMassLeak
from pathmeasure.oracles import (
    constant_potential_column,
    crank_nicolson,
    gaussian_heat_solution,
    heat_density,
    ou_exact_density,
)

FORBIDDEN_MODULES = {"kernel_core", "propagate", "volterra", "dyson", "wiener_mc"}
FORBIDDEN_NAMES = {"apply_kernel", "TransferOperator", "LagStack"}


def test_oracles_do_not_use_solver_code():
    tree = ast.parse(Path(oracles_mod.__file__).read_text())
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            mod = (node.module or "").split(".")[-1]
            assert mod not in FORBIDDEN_MODULES, mod
            assert not {a.name for a in node.names} & FORBIDDEN_NAMES
        elif isinstance(node, ast.Import):
            for a in node.names:
                assert a.name.split(".")[-1] not in FORBIDDEN_MODULES
        elif isinstance(node, ast.Name):
            assert node.id not in FORBIDDEN_NAMES


class TestClosedForms:
    def test_ou_frozen_value(self):
        # closed form by hand: mean e^{-1}, variance (1 - e^{-2}) / 2
        mean = math.exp(-1.0)
        var = (1.0 - math.exp(-2.0)) / 2.0
        by_hand = math.exp(-((0.0 - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
        assert ou_exact_density(1.0, 1.0, 1.0, 0.0, 1.0) == pytest.approx(0.5188316320964858, rel=1e-14)
        assert by_hand == pytest.approx(0.5188316320964858, rel=1e-14)

    def test_ou_kernel_agrees(self):
        x = np.linspace(-3, 3, 13)
        for t in (0.1, 1.0, 4.0):
            got = [eval_kernel(OUKernel(0.7, 1.3), 0.4, xi, t) for xi in x]
            np.testing.assert_allclose(got, ou_exact_density(0.7, 1.3, 0.4, x, t), rtol=1e-12)

    def test_heat_density(self):
        assert heat_density(0.0, 0.0, 1.0) == pytest.approx(1.0 / math.sqrt(4 * math.pi), rel=1e-14)
        assert constant_potential_column(0.0, 0.0, 1.0, 0.7) == pytest.approx(
            math.exp(-0.7) / math.sqrt(4 * math.pi), rel=1e-14
        )

    def test_ou_invalid(self):
        with pytest.raises(ValueError):
            ou_exact_density(-1.0, 1.0, 0.0, 0.0, 1.0)


class TestCrankNicolson:
    def _gauss_errors(self, grid_n, Ms):
        g = SpatialGrid(-12.0, 12.0, grid_n)
        f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
        exact = gaussian_heat_solution(g.points, 1.0)
        return [np.max(np.abs(crank_nicolson(f0, 1.0, np.zeros_like, 1.0, M).final().values.real - exact)) for M in Ms]

    def test_second_order_in_time(self):
        e = self._gauss_errors(4097, (4, 8, 16))
        for a, b in zip(e, e[1:]):
            assert 3.5 < a / b < 4.5

    def test_second_order_in_space(self):
        errs = []
        for n in (65, 129, 257):
            g = SpatialGrid(-12.0, 12.0, n)
            f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
            out = crank_nicolson(f0, 1.0, np.zeros_like, 0.5, 1024).final().values.real
            errs.append(np.max(np.abs(out - gaussian_heat_solution(g.points, 0.5))))
        for a, b in zip(errs, errs[1:]):
            assert 3.5 < a / b < 4.5

    def test_constant_potential(self):
        g = SpatialGrid(-12.0, 12.0, 1025)
        f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
        out = crank_nicolson(f0, 1.0, lambda x: np.full_like(x, 0.7), 1.0, 256).final().values.real
        np.testing.assert_allclose(out, math.exp(-0.7) * gaussian_heat_solution(g.points, 1.0), atol=1e-5)

    def test_boundary_leak(self):
        g = SpatialGrid(-3.0, 3.0, 121)
        f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
        with pytest.raises(BoundaryMassLeak):
            crank_nicolson(f0, 1.0, np.zeros_like, 1.0, 64)

    def test_store_all(self):
        g = SpatialGrid(-12.0, 12.0, 129)
        f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
        ref = crank_nicolson(f0, 1.0, np.zeros_like, 0.5, 8, store="all")
        assert ref.values.shape == (9, g.n)
        assert ref.times[-1] == 0.5
        np.testing.assert_array_equal(ref.final().values, crank_nicolson(f0, 1.0, np.zeros_like, 0.5, 8).final().values)

    def test_rannacher_start_damps_delta(self):
        g = SpatialGrid(-12.0, 12.0, 257)
        f0 = Field.delta(g, 0.0)
        plain = crank_nicolson(f0, 1.0, np.zeros_like, 0.05, 4).final().values.real
        damped = crank_nicolson(f0, 1.0, np.zeros_like, 0.05, 4, startup_steps=2).final().values.real
        exact = heat_density(g.points, 0.0, 0.05)
        assert np.max(np.abs(damped - exact)) < np.max(np.abs(plain - exact))


def test_ou_density_tabulated_is_transition_function():
    from pathmeasure import TabulatedKernel, check_chapman_kolmogorov

    g = SpatialGrid(-10.0, 10.0, 1025)
    X, Y = np.meshgrid(g.points, g.points, indexing="ij")
    times = [0.3, 0.7, 1.0]
    table = np.stack([ou_exact_density(1.0, 1.0, X, Y, t) for t in times])
    tab = TabulatedKernel(g, times, table)
    assert check_chapman_kolmogorov(tab, g, 1.0, 0.3) < 1e-8


def test_ou_stationary_limit():
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(ou_exact_density(1.0, math.sqrt(2.0), 5.0, x, 40.0), np.exp(-x * x / 2) / math.sqrt(2 * math.pi), rtol=1e-12)


def test_ou_small_time_concentrates():
    g = SpatialGrid(-5.0, 5.0, 4001)
    p = ou_exact_density(1.0, 1.0, 0.8, g.points, 1e-3)
    pairing = g.h * np.dot(g.weights, p * np.cos(g.points))
    assert pairing == pytest.approx(math.cos(0.8), abs=2e-3)


def test_cn_gaussian_error_is_spatial():
    # at n=1025 the error is the h^2 term of the second difference (about 4.8e-6),
    # independent of M; it drops below 1e-6 at n=4097
    errs = {}
    for n, M in ((1025, 256), (1025, 1024), (4097, 256)):
        g = SpatialGrid(-12.0, 12.0, n)
        f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
        out = crank_nicolson(f0, 1.0, np.zeros_like, 0.5, M).final().values.real
        errs[n, M] = np.max(np.abs(out - gaussian_heat_solution(g.points, 0.5)))
    assert errs[1025, 256] < 1e-5
    assert errs[1025, 1024] == pytest.approx(errs[1025, 256], rel=0.05)
    assert errs[4097, 256] < 1e-6


def test_cn_joint_refinement_second_order():
    errs = []
    for n, M in ((129, 16), (257, 32), (513, 64)):
        g = SpatialGrid(-12.0, 12.0, n)
        f0 = Field.from_function(g, lambda x: gaussian_heat_solution(x, 0.0))
        out = crank_nicolson(f0, 1.0, np.zeros_like, 0.5, M).final().values.real
        errs.append(np.max(np.abs(out - gaussian_heat_solution(g.points, 0.5))))
    for a, b in zip(errs, errs[1:]):
        assert 3.5 < a / b < 4.5

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathmeasure import Field, HeatKernel, OUKernel, Potential, SpatialGrid, relative_l2
from pathmeasure.errors import ActionRangeUnbounded, PotentialOverflow, UnboundedComposite
from pathmeasure.oracles import constant_potential_column, heat_density
from pathmeasure.propagate import (
    SliceSchedule,
    SolveReport,
    action_histogram,
    cylinder_integral_exp,
    cylinder_integral_general,
    fundamental_solution_V,
    potential_factor,
    trotter_propagate,
)

BUMP = Potential.from_callable(lambda x: 1.0 / (1.0 + x * x), 0.0, 1.0, "bump")


class TestSchedule:
    @given(st.floats(1e-3, 100.0), st.integers(1, 5000))
    def test_times_exact_endpoints(self, t, N):
        s = SliceSchedule(t, N)
        assert s.times[0] == 0.0
        assert s.times[-1] == t
        assert np.all(np.diff(s.times) > 0)
        assert s.dt == t / N

    @pytest.mark.parametrize("args", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            SliceSchedule(*args)

    def test_invalid_scheme(self):
        with pytest.raises(ValueError):
            SliceSchedule(1.0, 4, "euler")


class TestPotentialFactor:
    def test_underflow_counted(self):
        e, under = potential_factor(np.array([0.0, 1e6]), 1.0)
        assert e[0] == 1.0 and e[1] == 0.0 and under == 1

    def test_overflow(self):
        with pytest.raises(PotentialOverflow):
            potential_factor(np.array([-1e4]), 1.0)

    def test_trotter_overflow_per_slice(self, coarse_grid, heat):
        V = Potential.constant(-800.0)
        f0 = Field.delta(coarse_grid, 0.0)
        with pytest.raises(PotentialOverflow):
            trotter_propagate(f0, heat, V, SliceSchedule(1.0, 1))
        out = trotter_propagate(f0, heat, V, SliceSchedule(0.5, 4))
        assert np.all(np.isfinite(out.values))


class TestTrotter:
    @pytest.mark.parametrize("scheme", ["lie", "strang"])
    def test_constant_potential_exact(self, grid, heat, scheme):
        V = Potential.constant(0.7)
        col = fundamental_solution_V(heat, V, grid, SliceSchedule(1.0, 16, scheme), 0.0)
        exact = constant_potential_column(grid.points, 0.0, 1.0, 0.7)
        assert relative_l2(col, exact) < 1e-12

    def test_zero_potential_is_heat(self, grid, heat):
        col = fundamental_solution_V(heat, Potential.zero(), grid, SliceSchedule(1.0, 3), 0.0)
        np.testing.assert_allclose(col.values.real, heat_density(grid.points, 0.0, 1.0), atol=1e-12)

    def _errors(self, scheme, heat, harmonic, coarse_grid):
        ref = fundamental_solution_V(heat, harmonic, coarse_grid, SliceSchedule(1.0, 1024, "strang"), 0.0)
        return [
            relative_l2(fundamental_solution_V(heat, harmonic, coarse_grid, SliceSchedule(1.0, N, scheme), 0.0), ref)
            for N in (16, 32, 64)
        ]

    def test_lie_first_order(self, heat, harmonic, coarse_grid):
        e = self._errors("lie", heat, harmonic, coarse_grid)
        for a, b in zip(e, e[1:]):
            assert 1.7 < a / b < 2.3

    def test_strang_second_order(self, heat, harmonic, coarse_grid):
        e = self._errors("strang", heat, harmonic, coarse_grid)
        for a, b in zip(e, e[1:]):
            assert 3.5 < a / b < 4.5

    def test_direct_equals_spectral(self, coarse_grid, heat, harmonic):
        s = SliceSchedule(0.5, 32, "strang")
        a = fundamental_solution_V(heat, harmonic, coarse_grid, s, 0.0, method="direct")
        b = fundamental_solution_V(heat, harmonic, coarse_grid, s, 0.0, method="spectral")
        assert relative_l2(a, b) < 1e-10

    def test_diagnostics(self, coarse_grid, heat):
        diag = {}
        fundamental_solution_V(heat, Potential.zero(), coarse_grid, SliceSchedule(1.0, 4), 0.0, diagnostics=diag)
        assert diag["transport"] == "spectral"
        assert diag["underflow_points"] == 0

    def test_ou_two_point(self):
        g = SpatialGrid(-8.0, 8.0, 321)
        k = OUKernel(1.0, 1.0)
        col = fundamental_solution_V(k, Potential.constant(0.3), g, SliceSchedule(1.0, 8), 0.0, method="direct")
        # with a constant potential the column is exp(-c t) times the composed kernel
        ref = fundamental_solution_V(k, Potential.zero(), g, SliceSchedule(1.0, 8), 0.0, method="direct")
        np.testing.assert_allclose(col.values.real, math.exp(-0.3) * ref.values.real, rtol=1e-12, atol=1e-15)

    @given(st.floats(0.05, 1.0), st.integers(1, 20))
    def test_nonnegative_for_positive_kernel(self, t, N):
        g = SpatialGrid(-12.0, 12.0, 129)
        col = fundamental_solution_V(HeatKernel(1.0), Potential.harmonic(1.0), g, SliceSchedule(t, N), 0.0, "direct")
        assert np.all(col.values.real >= 0.0)


class TestCylinder:
    def test_exp_route(self, grid, heat):
        val = cylinder_integral_exp(heat, Potential.constant(0.7), 0.0, 0.0, 1.0, 8, grid)
        assert val.real == pytest.approx(math.exp(-0.7) / math.sqrt(4 * math.pi), rel=1e-12)

    def test_exp_route_rejects_unbounded(self, grid, heat):
        with pytest.raises(UnboundedComposite):
            cylinder_integral_exp(heat, Potential.linear(), 0.0, 0.0, 1.0, 8, grid)

    def test_general_f_one_is_free_kernel(self, coarse_grid, heat):
        val = cylinder_integral_general(heat, BUMP, lambda s: np.ones_like(s), 0.0, 0.0, 1.0, 8, 32, coarse_grid)
        free = cylinder_integral_exp(heat, Potential.zero(), 0.0, 0.0, 1.0, 8, coarse_grid)
        assert val.real == pytest.approx(free.real, rel=1e-13)

    def test_general_matches_exp_route(self, coarse_grid, heat):
        gen = cylinder_integral_general(heat, BUMP, lambda s: np.exp(-s), 0.0, 0.0, 1.0, 16, 256, coarse_grid)
        ref = cylinder_integral_exp(heat, BUMP, 0.0, 0.0, 1.0, 16, coarse_grid)
        assert abs(gen - ref) < 1e-4 * abs(ref)

    def test_histogram_refines(self, coarse_grid, heat):
        ref = cylinder_integral_exp(heat, BUMP, 0.0, 0.0, 1.0, 16, coarse_grid)
        errs = [
            abs(cylinder_integral_general(heat, BUMP, lambda s: np.exp(-s), 0.0, 0.0, 1.0, 16, B, coarse_grid) - ref)
            for B in (16, 64, 256)
        ]
        assert errs[0] > errs[1] > errs[2]

    def test_constant_potential_action_is_sharp(self, coarse_grid, heat):
        # V = c: every path has action c t, so f(s) = s gives c t times the free value;
        # with 9 bins each slice moves the action by exactly one bin
        V = Potential.constant(0.5)
        val = cylinder_integral_general(heat, V, lambda s: s, 0.0, 0.0, 1.0, 8, 9, coarse_grid)
        free = cylinder_integral_exp(heat, Potential.zero(), 0.0, 0.0, 1.0, 8, coarse_grid)
        assert val.real == pytest.approx(0.5 * free.real, rel=1e-12)

    def test_histogram_mass(self, coarse_grid, heat):
        hist = action_histogram(heat, BUMP, 0.0, 1.0, 8, 64, coarse_grid)
        free = fundamental_solution_V(heat, Potential.zero(), coarse_grid, SliceSchedule(1.0, 8), 0.0)
        np.testing.assert_allclose(hist.total().real, free.values.real, atol=1e-12)
        assert hist.lo == 0.0 and hist.hi == pytest.approx(1.0)

    def test_nonfinite_potential(self, coarse_grid, heat):
        V = Potential.from_callable(lambda x: np.where(x > 5, np.inf, 0.0), 0.0, np.inf, "wall")
        with pytest.raises(ActionRangeUnbounded):
            action_histogram(heat, V, 0.0, 1.0, 4, 8, coarse_grid)

    def test_bins_validated(self, coarse_grid, heat):
        with pytest.raises(ValueError):
            action_histogram(heat, BUMP, 0.0, 1.0, 4, 1, coarse_grid)


def test_solve_report_json(coarse_grid):
    f = Field.delta(coarse_grid, 0.0)
    rep = SolveReport("trotter", coarse_grid, SliceSchedule(1.0, 4).to_dict(), {"a": 1}, f, 0.5 + 0j)
    d = json.loads(rep.to_json())
    assert d["schedule"]["dt"] == 0.25
    assert d["value"] == {"re": 0.5, "im": 0.0}
    assert len(d["field"]["re"]) == coarse_grid.n


def test_strang_self_convergence(grid, heat, harmonic):
    f0 = Field.from_function(grid, lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi))
    a = trotter_propagate(f0, heat, harmonic, SliceSchedule(1.0, 256, "strang"))
    b = trotter_propagate(f0, heat, harmonic, SliceSchedule(1.0, 512, "strang"))
    assert relative_l2(a, b) < 1e-5


def test_zero_potential_column_matches_kernel(grid, heat):
    col = fundamental_solution_V(heat, Potential.zero(), grid, SliceSchedule(1.0, 128), 0.0)
    assert np.max(np.abs(col.values.real - heat.evaluate(grid.points, 0.0, 1.0))) < 1e-6


def test_cylinder_free_off_diagonal(grid, heat):
    val = cylinder_integral_exp(heat, Potential.zero(), 1.5, -0.75, 1.0, 16, grid)
    assert val.real == pytest.approx(heat_density(1.5, -0.75, 1.0), rel=1e-10)

#!/usr/bin/env python3
"""
Tests for the core types: grid, pressure, norms, boundary signals and configs
"""

import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhd_core import (
    BoundaryMagnetic, ConfigError, DomainError, FluidParams, Grid, InitialData,
    ScenarioConfig, State, UsageError, VacuumError, interior_linf, interpolate_center_to_face,
    interpolate_face_to_center, l2_norm, linf_norm, pressure, restrict_to_coarse, uniform_times,
    weighted_h1_integral,
)


class TestFluidParams:
    def test_defaults(self):
        params = FluidParams()
        assert (params.A, params.gamma, params.lam) == (1.0, 1.4, 1.0)

    @pytest.mark.parametrize("kwargs", [{"A": 0}, {"gamma": 1.0}, {"lam": -1}])
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ConfigError):
            FluidParams(**kwargs)


class TestGrid:
    def test_layout(self):
        grid = Grid(4)
        assert grid.dx == 0.25
        np.testing.assert_allclose(grid.faces, [0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(grid.cell_centers, [0.125, 0.375, 0.625, 0.875])
        assert grid.faces[-1] == 1.0

    def test_arrays_are_read_only(self):
        grid = Grid(8)
        with pytest.raises(ValueError):
            grid.faces[0] = 1.0

    @pytest.mark.parametrize("n", [0, 1, 2.5])
    def test_rejects_small_or_fractional(self, n):
        with pytest.raises(ConfigError):
            Grid(n)


class TestPressure:
    def test_scalar(self):
        assert pressure(1.0, FluidParams(A=2.0)) == 2.0
        assert pressure(0.0, FluidParams()) == 0.0

    def test_array(self):
        params = FluidParams(A=1.0, gamma=2.0)
        np.testing.assert_allclose(pressure(np.array([1.0, 2.0, 3.0]), params), [1.0, 4.0, 9.0])

    def test_negative_density(self):
        with pytest.raises(DomainError):
            pressure(-0.1, FluidParams())


class TestNorms:
    def test_l2_of_constant_on_cells_and_faces(self):
        grid = Grid(16)
        assert l2_norm(np.ones(16), grid) == pytest.approx(1.0)
        assert l2_norm(np.ones(17), grid) == pytest.approx(1.0)

    def test_wrong_length(self):
        with pytest.raises(UsageError):
            l2_norm(np.ones(5), Grid(16))

    def test_linf(self):
        grid = Grid(4)
        assert linf_norm(np.array([0.0, -3.0, 1.0, 2.0]), grid) == 3.0

    def test_interior_excludes_walls(self):
        grid = Grid(10)
        f = np.zeros(10)
        f[0] = 5.0
        f[5] = 1.0
        assert interior_linf(f, grid, 0.1) == 1.0
        assert interior_linf(f, grid, 0.0) == 5.0

    @pytest.mark.parametrize("delta", [-0.1, 0.5, 0.7])
    def test_interior_delta_domain(self, delta):
        with pytest.raises(DomainError):
            interior_linf(np.ones(10), Grid(10), delta)

    def test_interior_empty_set(self):
        assert interior_linf(np.ones(4), Grid(4), 0.49) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=8, max_size=8),
           st.floats(0, 0.49), st.floats(0, 0.49))
    def test_interior_monotone_in_delta(self, values, d1, d2):
        grid = Grid(8)
        f = np.array(values)
        small, large = sorted((d1, d2))
        assert interior_linf(f, grid, large) <= interior_linf(f, grid, small)

    def test_weighted_integral_vanishes_for_constants(self):
        grid = Grid(32)
        assert weighted_h1_integral(np.full(32, 2.0), np.full(32, -1.0), grid) == 0.0

    def test_weighted_integral_weights_interior(self):
        grid = Grid(4)
        rho = np.array([0.0, 1.0, 1.0, 1.0])
        # jump at the face x=0.25 where xi = 0.25^2 * 0.75^2
        expected = (0.25 ** 2 * 0.75 ** 2) * (1.0 / 0.25) ** 2 * 0.25
        assert weighted_h1_integral(rho, np.zeros(4), grid) == pytest.approx(expected)


class TestBoundaryMagnetic:
    def test_none_and_constant(self):
        assert BoundaryMagnetic.none().values(1.0) == (0.0, 0.0)
        assert BoundaryMagnetic.constant(1, -2).values(0.3) == (1.0, -2.0)

    def test_ramp_is_smooth_step(self):
        ramp = BoundaryMagnetic.ramp(1.0, 2.0, 0.1)
        assert ramp.values(0.0) == (0.0, 0.0)
        assert ramp.values(0.05) == pytest.approx((0.5, 1.0))
        assert ramp.values(0.1) == (1.0, 2.0)
        assert ramp.values(5.0) == (1.0, 2.0)

    def test_sinusoid(self):
        signal = BoundaryMagnetic.sinusoid(1.0, np.pi, 0.5, 2 * np.pi)
        assert signal.values(0.5) == pytest.approx((1.0, 0.0), abs=1e-15)
        assert signal.peak_amplitude() == 1.0

    def test_trivial(self):
        assert BoundaryMagnetic.constant(0, 0).is_trivial
        assert not BoundaryMagnetic.ramp(1, 1).is_trivial

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            BoundaryMagnetic("square")


class TestScenarioConfig:
    def test_nonresistive_needs_no_boundary(self):
        with pytest.raises(ConfigError, match="nu=0 requires boundary kind none"):
            ScenarioConfig(nu=0.0, boundary_b=BoundaryMagnetic.constant(1, 1))

    def test_resistive_needs_boundary(self):
        with pytest.raises(ConfigError, match="nu>0 requires a magnetic boundary signal"):
            ScenarioConfig(nu=1e-3)

    def test_default_snapshot_is_final_time(self):
        assert ScenarioConfig(t_final=0.3).snapshot_times == (0.3,)

    def test_unsorted_snapshots(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(t_final=1.0, snapshot_times=(0.5, 0.1))

    def test_with_resistivity(self):
        base = ScenarioConfig(nu=1e-2, boundary_b=BoundaryMagnetic.constant(1, 1))
        limit = base.with_resistivity(0.0)
        assert not limit.resistive
        assert limit.boundary_b.kind == "none"

    def test_smooth_initial_data(self):
        grid = Grid(32)
        state = InitialData.smooth(1.0, 0.1, 0.2, 0.3).build(grid)
        assert state.u[0] == state.u[-1] == 0.0
        assert state.rho.min() > 0
        state.validate()

    def test_initial_density_must_be_positive(self):
        with pytest.raises(ConfigError):
            InitialData.smooth(0.1, 0.2, 0.0, 0.0)


class TestStateHelpers:
    def test_validate_reports_vacuum(self):
        state = State(np.array([1.0, 1e-9, 1.0]), np.zeros(4), np.zeros(3))
        with pytest.raises(VacuumError) as err:
            state.validate()
        assert err.value.cell == 1

    def test_vacuum_error_pickles(self):
        err = pickle.loads(pickle.dumps(VacuumError(3, 0.5, 1e-10)))
        assert (err.cell, err.time, err.value) == (3, 0.5, 1e-10)

    def test_restriction_preserves_constants_and_mass(self):
        fine = InitialData.smooth(1.0, 0.1, 0.1, 0.1).build(Grid(64))
        coarse = restrict_to_coarse(fine, 2)
        assert coarse.n_cells == 32
        assert coarse.rho.mean() == pytest.approx(fine.rho.mean())
        np.testing.assert_array_equal(coarse.u, fine.u[::2])

    def test_restriction_factor_must_divide(self):
        with pytest.raises(UsageError):
            restrict_to_coarse(InitialData.constant(1.0).build(Grid(10)), 3)

    def test_uniform_times(self):
        times = uniform_times(0.25, 4)
        assert len(times) == 5
        assert times[0] == 0.0 and times[-1] == 0.25

    def test_interpolation_between_centers_and_faces(self):
        grid = Grid(4)
        faces = interpolate_center_to_face(np.array([1.0, 3.0, 5.0, 7.0]), grid)
        np.testing.assert_array_equal(faces, [1.0, 2.0, 4.0, 6.0, 7.0])
        np.testing.assert_array_equal(interpolate_face_to_center(faces, grid), [1.5, 3.0, 5.0, 6.5])
        with pytest.raises(UsageError):
            interpolate_center_to_face(faces, grid)

#!/usr/bin/env python3
"""
Tests for the boundary-layer study
"""

import numpy as np
import pytest

from boundary_layer import (
    LayerReport, LayerRow, LayerScenario, density_bounds_check, layer_dichotomy_check,
    run_layer_study, thickness_estimate, velocity_no_layer_check,
)
from mhd_core import BoundaryMagnetic, ConfigError, DomainError, InsufficientDataError

LADDER = (1e-1, 1e-2, 1e-3)


def row(nu, **values):
    fields = dict(delta=0.1, interior_b=0.0, interior_rho=0.0, full_b=1.0, full_rho=0.0, u_sup=0.0,
                  ux_sq_sup=0.0, weighted_sup=0.0, thickness=0.0, rho_min=1.0, rho_max=1.0)
    fields.update(values)
    return LayerRow(nu=nu, **fields)


class TestThickness:
    def test_zero_profile(self):
        assert thickness_estimate(np.zeros(100), 1.0, 0.01) == 0.0

    def test_layer_fills_domain(self):
        assert thickness_estimate(np.ones(100), 1.0, 0.01) == 0.5

    def test_exponential_layer(self):
        n = 1000
        x = (np.arange(n) + 0.5) / n
        ell = 0.01
        b = np.exp(-x / ell) + np.exp(-(1 - x) / ell)
        assert thickness_estimate(b, 1.0, 0.01) == pytest.approx(ell * np.log(100.0), abs=2.0 / n)

    def test_one_sided_layer(self):
        b = np.zeros(10)
        b[1] = 1.0
        # cell 1 is admitted once delta < 0.1, so the interior starts at 0.2
        assert thickness_estimate(b, 1.0, 0.5) == pytest.approx(0.2)

    @pytest.mark.parametrize("amplitude", [0.0, -1.0])
    def test_amplitude_must_be_positive(self, amplitude):
        with pytest.raises(DomainError):
            thickness_estimate(np.zeros(10), amplitude, 0.01)


class TestLayerScenario:
    def test_exponent_below_one_half(self):
        with pytest.raises(ConfigError):
            LayerScenario(delta_exponent=0.5)

    def test_needs_boundary_signal(self):
        with pytest.raises(ConfigError):
            LayerScenario(boundary_b=BoundaryMagnetic.none())

    def test_delta_is_on_the_face_lattice(self):
        scn = LayerScenario(nu_ladder=LADDER, grid_n=256)
        for nu in LADDER:
            k = scn.delta(nu) * 256
            assert k == pytest.approx(round(k))
            assert 0 < scn.delta(nu) < 0.5
        assert scn.delta(1e-3) < scn.delta(1e-1)

    def test_rest_state_config(self):
        config = LayerScenario(rho_bar=2.0, nu_ladder=LADDER, grid_n=256).config(1e-2)
        state = config.initial.build(config.grid)
        assert np.all(state.rho == 2.0) and not np.any(state.u) and not np.any(state.b)


class TestRunLayerStudy:
    def test_under_resolved_grid(self):
        scn = LayerScenario(nu_ladder=(1e-2, 1e-3, 1e-4), grid_n=64, t_final=0.01)
        with pytest.raises(ConfigError, match="does not resolve"):
            run_layer_study(scn, workers=1)

    def test_zero_signal_gives_trivial_columns(self):
        scn = LayerScenario(boundary_b=BoundaryMagnetic.constant(0.0, 0.0), nu_ladder=LADDER,
                            grid_n=256, t_final=0.01)
        report = run_layer_study(scn, workers=1)
        for r in report.rows:
            assert r.interior_b == r.full_b == r.u_sup == r.ux_sq_sup == r.weighted_sup == r.thickness == 0.0
            assert r.rho_min == r.rho_max == 1.0
        assert all(fit is None for fit in report.fits.values())

    def test_ramp_study(self):
        scn = LayerScenario(nu_ladder=LADDER, grid_n=256, t_final=0.05)
        report = run_layer_study(scn, workers=1)
        assert [r.nu for r in report.rows] == list(LADDER)
        for r in report.rows:
            assert r.interior_b <= r.full_b
            assert r.interior_rho <= r.full_rho
            assert r.full_b > 0 and 0 < r.thickness <= 0.5
        assert set(report.profiles) == set(LADDER)
        assert len(report.to_frame()) == 3
        assert list(report.fit_frame()["column"]) == ["ux_sq_sup", "weighted_sup", "thickness"]


class TestChecks:
    def test_velocity_check_on_exact_power_law(self):
        report = LayerReport(rows=[row(nu, ux_sq_sup=2.0 * nu ** 0.5, u_sup=nu) for nu in LADDER])
        check = velocity_no_layer_check(report)
        assert check.exponent == pytest.approx(0.5)
        assert check.u_sup_decreasing

    def test_velocity_check_not_applicable_for_zero_columns(self):
        check = velocity_no_layer_check(LayerReport(rows=[row(nu) for nu in LADDER]))
        assert check.exponent is None and not check.applicable

    def test_velocity_check_needs_three_rows(self):
        with pytest.raises(InsufficientDataError):
            velocity_no_layer_check(LayerReport(rows=[row(1e-1), row(1e-2)]))

    def test_dichotomy(self):
        good = LayerReport(rows=[row(1e-2, interior_b=0.4), row(1e-3, interior_b=0.2), row(1e-4, interior_b=0.05)])
        assert layer_dichotomy_check(good, 1.0).passed
        slow = LayerReport(rows=[row(1e-2, interior_b=0.4), row(1e-3, interior_b=0.3), row(1e-4, interior_b=0.2)])
        assert not layer_dichotomy_check(slow, 1.0).passed
        lost = LayerReport(rows=[row(1e-2, interior_b=0.4, full_b=0.3), row(1e-4, interior_b=0.01)])
        assert not layer_dichotomy_check(lost, 1.0).passed

    def test_density_bounds(self):
        steady = LayerReport(rows=[row(nu, rho_min=0.9, rho_max=1.1) for nu in LADDER])
        assert density_bounds_check(steady, 1.0).passed
        drifting = LayerReport(rows=[row(1e-1, rho_min=0.9), row(1e-2, rho_min=0.5), row(1e-3, rho_min=0.2)])
        assert not density_bounds_check(drifting, 1.0).passed
        vacuum = LayerReport(rows=[row(nu, rho_min=0.05) for nu in LADDER])
        assert not density_bounds_check(vacuum, 1.0).passed

#!/usr/bin/env python3
"""
Tests for the vanishing-resistivity sweep and the rate fits
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhd_core import BoundaryMagnetic, ConfigError, InitialData, InsufficientDataError, ScenarioConfig
from resistivity_limit import (
    SweepSpec, fit_rate, monotone_decreasing_in_nu, parallel_map, resolve_workers, run_sweep,
)


def base(n=32, t_final=0.02):
    return ScenarioConfig(grid_n=n, t_final=t_final, initial=InitialData.smooth(1.0, 0.1, 0.1, 0.1))


def _square(x):
    return x * x


class TestFitRate:
    def test_exact_power_law(self):
        fit = fit_rate([(nu, 3.0 * nu ** 0.5) for nu in (1e-1, 1e-2, 1e-3, 1e-4)])
        assert fit.exponent == pytest.approx(0.5)
        assert fit.prefactor == pytest.approx(3.0)
        assert fit.r_squared == pytest.approx(1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 2.0), st.floats(0.1, 10.0))
    def test_recovers_any_exponent(self, exponent, prefactor):
        fit = fit_rate([(nu, prefactor * nu ** exponent) for nu in (1e-1, 3e-2, 1e-2, 3e-3)])
        assert fit.exponent == pytest.approx(exponent, rel=1e-9)

    def test_constant_values(self):
        fit = fit_rate([(1e-1, 2.0), (1e-2, 2.0), (1e-3, 2.0)])
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 0.0

    def test_needs_three_points(self):
        with pytest.raises(InsufficientDataError):
            fit_rate([(1e-1, 1.0), (1e-2, 0.5)])

    @pytest.mark.parametrize("points", [
        [(1e-1, 1.0), (1e-2, 0.0), (1e-3, 0.1)],
        [(1e-1, 1.0), (1e-1, 0.5), (1e-3, 0.1)],
        [(0.0, 1.0), (1e-2, 0.5), (1e-3, 0.1)],
    ])
    def test_rejects_degenerate_points(self, points):
        with pytest.raises(InsufficientDataError):
            fit_rate(points)


class TestWorkers:
    def test_argument_wins(self, monkeypatch):
        monkeypatch.setenv("MHD1D_THREADS", "8")
        assert resolve_workers(2) == 2

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("MHD1D_THREADS", "3")
        assert resolve_workers() == 3

    def test_bad_environment(self, monkeypatch):
        monkeypatch.setenv("MHD1D_THREADS", "many")
        with pytest.raises(ConfigError):
            resolve_workers()

    def test_parallel_map_keeps_order(self):
        assert parallel_map(_square, [3, 1, 2], 1) == [9, 1, 4]
        assert parallel_map(_square, [3, 1, 2], 2) == [9, 1, 4]


class TestSweepSpec:
    def test_ladder_sorted_descending(self):
        spec = SweepSpec(base(), (1e-4, 1e-2, 1e-3))
        assert spec.nu_ladder == (1e-2, 1e-3, 1e-4)

    @pytest.mark.parametrize("ladder", [(), (1.0,), (1e-2, 1e-2), (-1e-3,)])
    def test_rejects_bad_ladders(self, ladder):
        with pytest.raises(ConfigError):
            SweepSpec(base(), ladder)

    def test_needs_boundary_signal(self):
        with pytest.raises(ConfigError):
            SweepSpec(base(), (1e-2,), boundary_b=BoundaryMagnetic.none())

    def test_resistive_configs_share_the_comparison_times(self):
        spec = SweepSpec(base(t_final=0.1), (1e-2, 1e-3), comparison_count=4)
        config = spec.resistive_config(1e-3)
        assert config.nu == 1e-3
        assert config.snapshot_times == spec.reference.snapshot_times
        assert len(spec.comparison_times) == 5


class TestRunSweep:
    def test_rows_and_fits(self):
        report = run_sweep(SweepSpec(base(), (1e-1, 3e-2, 1e-2), saturation_guard=False), workers=1)
        assert [row.nu for row in report.rows] == [1e-1, 3e-2, 1e-2]
        assert monotone_decreasing_in_nu(report.column("b_diff"))
        assert all(value > 0 for value in report.column("b_diff"))
        assert report.fits["b_diff"] is not None
        assert report.fits["b_diff"].exponent > 0
        frame = report.to_frame()
        assert list(frame.columns)[0] == "nu"
        assert len(report.fit_frame()) == 6

    def test_single_point_ladder_has_no_exponents(self):
        report = run_sweep(SweepSpec(base(), (1e-2,)), workers=1)
        assert len(report.rows) == 1
        assert all(fit is None for fit in report.fits.values())
        assert report.fit_frame()["exponent"].isna().all()

    def test_serial_and_pooled_runs_agree(self):
        spec = SweepSpec(base(n=16, t_final=0.01), (1e-1, 1e-2, 1e-3), saturation_guard=False)
        serial = run_sweep(spec, workers=1).to_frame()
        pooled = run_sweep(spec, workers=3).to_frame()
        assert serial.to_csv(float_format="%.17g") == pooled.to_csv(float_format="%.17g")

    def test_saturation_estimate(self):
        spec = SweepSpec(base(n=16, t_final=0.01), (1e-1, 3e-2, 1e-2, 3e-3))
        report = run_sweep(spec, workers=1)
        assert set(report.discretization_error) == {"rho", "u", "b"}
        assert all(np.isfinite(v) for v in report.discretization_error.values())
        assert set(report.dropped) >= {"rho_diff", "u_diff", "b_diff"}


def test_monotone_helper():
    assert monotone_decreasing_in_nu([3.0, 2.0, 2.0, 1.0])
    assert not monotone_decreasing_in_nu([1.0, 2.0])

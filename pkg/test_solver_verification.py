#!/usr/bin/env python3
"""
Tests for the verification oracles and the acceptance suite
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhd_core import BoundaryMagnetic, FluidParams, InitialData, ScenarioConfig, UsageError
from solver_verification import (
    ManufacturedCase, constant_case, energy_refinement_study, flux_identity_refinement_study,
    mass_conservation_check, mms_order_study, run_acceptance_suite, self_convergence,
    smooth_config, standard_case, trivial_solution_check,
)


class TestTrivialSolution:
    @pytest.mark.parametrize("rho_bar, nu", [(1.0, 0.0), (2.5, 1e-3)])
    def test_rest_state_is_preserved(self, rho_bar, nu):
        result = trivial_solution_check(rho_bar, nu, 64, 0.1)
        assert result.passed
        assert result.value <= 1e-12

    def test_forcing_is_reported(self):
        result = trivial_solution_check(1.0, 1e-3, 64, 0.05, boundary=BoundaryMagnetic.ramp(1.0, 1.0))
        assert not result.passed
        assert result.value > 1e-3
        assert result.detail == "nontrivial forcing"

    @settings(max_examples=20, deadline=None)
    @given(rho_bar=st.floats(0.1, 10.0), nu=st.sampled_from([0.0, 1e-3, 1e-1]),
           gamma=st.floats(1.05, 3.0), A=st.floats(0.1, 5.0), lam=st.floats(0.01, 5.0))
    def test_randomized_parameters(self, rho_bar, nu, gamma, A, lam):
        params = FluidParams(A=A, gamma=gamma, lam=lam)
        assert trivial_solution_check(rho_bar, nu, 16, 0.02, params=params).passed


class TestManufacturedCase:
    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 2.0))
    def test_constant_state_sources_vanish(self, x, t):
        case = constant_case()
        assert case.source_rho(np.array([x]), t)[0] == 0.0
        assert case.source_u(np.array([x]), t)[0] == 0.0
        assert case.source_b(np.array([x]), t)[0] == 0.0

    def test_fields_respect_walls(self):
        case = standard_case()
        assert case.u(0.0, 0.3) == 0.0
        assert case.u(1.0, 0.3) == pytest.approx(0.0, abs=1e-30)
        assert case.boundary_values(0.0) == pytest.approx((0.1, -0.1))
        assert np.min(case.rho(np.linspace(0, 1, 101), 0.0)) > 0

    def test_continuity_source_matches_finite_differences(self):
        case = standard_case()
        x, t, h = np.linspace(0.1, 0.9, 9), 0.2, 1e-6
        rho_t = (case.rho(x, t + h) - case.rho(x, t - h)) / (2 * h)
        flux_x = (case.rho(x + h, t) * case.u(x + h, t) - case.rho(x - h, t) * case.u(x - h, t)) / (2 * h)
        np.testing.assert_allclose(case.source_rho(x, t), rho_t + flux_x, atol=1e-7)

    def test_induction_source_matches_finite_differences(self):
        case = standard_case(nu=0.01)
        x, t, h = np.linspace(0.1, 0.9, 9), 0.2, 1e-4
        b_t = (case.b(x, t + h) - case.b(x, t - h)) / (2 * h)
        flux_x = (case.u(x + h, t) * case.b(x + h, t) - case.u(x - h, t) * case.b(x - h, t)) / (2 * h)
        b_xx = (case.b(x + h, t) - 2 * case.b(x, t) + case.b(x - h, t)) / h ** 2
        np.testing.assert_allclose(case.source_b(x, t), b_t + flux_x - 0.01 * b_xx, atol=1e-6)

    def test_momentum_source_matches_finite_differences(self):
        params = FluidParams(A=1.3, gamma=1.6, lam=0.7)
        case = ManufacturedCase(params, 0.01)
        x, t, h = np.linspace(0.1, 0.9, 9), 0.2, 1e-4
        rho, u, b = case.rho(x, t), case.u(x, t), case.b(x, t)
        u_t = (case.u(x, t + h) - case.u(x, t - h)) / (2 * h)
        u_x = (case.u(x + h, t) - case.u(x - h, t)) / (2 * h)
        u_xx = (case.u(x + h, t) - 2 * u + case.u(x - h, t)) / h ** 2
        p_x = params.A * (case.rho(x + h, t) ** params.gamma - case.rho(x - h, t) ** params.gamma) / (2 * h)
        mag_x = (case.b(x + h, t) ** 2 - case.b(x - h, t) ** 2) / (4 * h)
        expected = rho * (u_t + u * u_x) + p_x + mag_x - params.lam * u_xx
        np.testing.assert_allclose(case.source_u(x, t), expected, atol=1e-6)


class TestOrderStudy:
    def test_constant_case_is_exact(self):
        study = mms_order_study(constant_case(nu=0.01), "resistive", (16, 32), 0.02, workers=1)
        assert study.status == "exact"
        assert study.passed()

    def test_system_must_match_case(self):
        with pytest.raises(UsageError):
            mms_order_study(standard_case(nu=0.01), "nonresistive", (16, 32), 0.02, workers=1)
        with pytest.raises(UsageError):
            mms_order_study(standard_case(nu=0.01), "implicit", (16, 32), 0.02, workers=1)

    @pytest.mark.parametrize("nu, system", [(0.01, "resistive"), (0.0, "nonresistive")])
    def test_errors_shrink_under_refinement(self, nu, system):
        study = mms_order_study(standard_case(nu=nu), system, (32, 64, 128), 0.05, workers=1)
        assert study.status == "ok"
        for name, orders in study.orders.items():
            assert all(order > 0.5 for order in orders), (name, orders)


class TestSelfConvergence:
    def test_trivial_config_is_not_applicable(self):
        config = ScenarioConfig(grid_n=16, t_final=0.02, initial=InitialData.constant(1.0))
        study = self_convergence(config, 3, workers=1)
        assert study.status == "not-applicable"
        assert all(not ratios for ratios in study.ratios.values())

    def test_needs_three_levels(self):
        with pytest.raises(UsageError):
            self_convergence(smooth_config(16, 0.02), 2)

    def test_mirrored_configs_give_the_same_ratios(self):
        plain = ScenarioConfig(grid_n=16, t_final=0.02, initial=InitialData.smooth(1.0, 0.1, 0.1, 0.1))
        mirrored = ScenarioConfig(grid_n=16, t_final=0.02, initial=InitialData.smooth(1.0, -0.1, -0.1, 0.1))
        a = self_convergence(plain, 3, workers=1)
        b = self_convergence(mirrored, 3, workers=1)
        for name in ("rho", "u", "b"):
            np.testing.assert_allclose(a.ratios[name], b.ratios[name], rtol=1e-6)

    def test_smooth_ratios_are_positive(self):
        study = self_convergence(smooth_config(32, 0.02), 3, workers=1)
        assert study.grids == [32, 64, 128]
        assert all(r > 1.0 for ratios in study.ratios.values() for r in ratios)


class TestRefinementStudies:
    def test_flux_identity_residual_shrinks(self):
        study = flux_identity_refinement_study(smooth_config(32, 0.05), 2, workers=1)
        assert study.grids == [32, 64]
        assert study.residuals[1] < study.residuals[0]

    def test_energy_residual_shrinks(self):
        study = energy_refinement_study(smooth_config(32, 0.05), 2, workers=1)
        assert study.residuals[1] < study.residuals[0]

    @pytest.mark.parametrize("nu", [0.0, 1e-3])
    def test_mass_conservation(self, nu):
        assert mass_conservation_check(smooth_config(64, 0.2, nu)).passed


class TestAcceptanceSuite:
    def test_unknown_scale(self):
        with pytest.raises(UsageError):
            run_acceptance_suite("huge")

    def test_quick_suite(self):
        checks = run_acceptance_suite("quick", workers=1)
        names = [c.name for c in checks]
        assert "trivial solution nu=0" in names
        assert "MMS order (resistive)" in names
        assert "flux identity refinement" in names
        assert "self-convergence" in names
        for check in checks:
            if check.name.startswith(("trivial", "mass")):
                assert check.passed, check

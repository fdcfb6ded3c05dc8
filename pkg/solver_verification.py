#!/usr/bin/env python3
"""
Correctness oracles for the 1D MHD solver.

- trivial_solution_check: the rest state with zero boundary data must stay put
- mms_order_study: manufactured solutions with injected sources, observed order per field
- self_convergence: Cauchy ratios between successively refined runs
- energy / flux-identity refinement studies and the full acceptance suite
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mhd_core import (
    BoundaryMagnetic, CheckResult, FluidParams, Grid, InitialData, ScenarioConfig,
    SolverError, State, UsageError, l2_norm, restrict_to_coarse,
)
from mhd_diagnostics import energy_balance_residual, flux_gradient_identity_residual
from mhd_solver import SolverHooks, run
from boundary_layer import (
    LayerScenario, density_bounds_check, layer_dichotomy_check, run_layer_study,
    velocity_no_layer_check,
)
from resistivity_limit import SweepSpec, parallel_map, run_sweep

logger = logging.getLogger(__name__)

TRIVIAL_TOL = 1e-12
EXACT_TOL = 1e-12
ORDER_WINDOW = (0.8, 2.2)
RATIO_WINDOW = (1.7, 2.3)
MIN_REFINEMENT_RATIO = 1.7
FIELDS = ("rho", "u", "b")


def _deviation(state: State, rho_bar: float) -> float:
    return float(np.max(np.abs(state.rho - rho_bar)) + np.max(np.abs(state.u)) + np.max(np.abs(state.b)))


def trivial_solution_check(rho_bar: float, nu: float, grid_n: int, t_final: float,
                           boundary: Optional[BoundaryMagnetic] = None,
                           params: Optional[FluidParams] = None) -> CheckResult:
    """Run from (rho_bar, 0, 0); the max deviation over the run must stay below TRIVIAL_TOL"""
    if nu > 0 and boundary is None:
        boundary = BoundaryMagnetic.constant(0.0, 0.0)
    config = ScenarioConfig(
        params=params or FluidParams(), nu=nu, grid_n=grid_n, t_final=t_final,
        initial=InitialData.constant(rho_bar),
        boundary_b=boundary if nu > 0 else BoundaryMagnetic.none(),
    )
    worst = [0.0]

    def watch(state: State):
        worst[0] = max(worst[0], _deviation(state, rho_bar))

    run(config, observer=watch)
    passed = worst[0] <= TRIVIAL_TOL
    forced = nu > 0 and not config.boundary_b.is_trivial
    reason = "nontrivial forcing" if forced else ("" if passed else "rest state drifted")
    return CheckResult(f"trivial solution nu={nu:g}", passed, worst[0], reason)


@dataclass(frozen=True)
class ManufacturedCase:
    """
    Closed-form fields
        rho = rho_bar + a sin(2 pi x) e^-t
        u   = a sin^2(pi x) e^-t
        b   = a cos(pi x) e^-t
    with the sources that make them solve the discretized equations
    (velocity-form momentum). a = 0 gives the constant state with zero sources.
    """
    params: FluidParams = FluidParams()
    nu: float = 0.01
    rho_bar: float = 2.0
    amplitude: float = 0.1

    def __post_init__(self):
        if not self.rho_bar - abs(self.amplitude) > 0:
            raise UsageError("manufactured density must stay positive")
        if self.nu < 0:
            raise UsageError(f"nu must be >= 0 (got {self.nu})")

    @property
    def system(self) -> str:
        return "resistive" if self.nu > 0 else "nonresistive"

    def rho(self, x, t):
        return self.rho_bar + self.amplitude * np.sin(2 * np.pi * x) * math.exp(-t)

    def u(self, x, t):
        return self.amplitude * np.sin(np.pi * x) ** 2 * math.exp(-t)

    def b(self, x, t):
        return self.amplitude * np.cos(np.pi * x) * math.exp(-t)

    def source_rho(self, x, t):
        a, e = self.amplitude, math.exp(-t)
        rho_t = -a * np.sin(2 * np.pi * x) * e
        rho_x = 2 * np.pi * a * np.cos(2 * np.pi * x) * e
        u_x = np.pi * a * np.sin(2 * np.pi * x) * e
        return rho_t + rho_x * self.u(x, t) + self.rho(x, t) * u_x

    def source_u(self, x, t):
        a, e = self.amplitude, math.exp(-t)
        p = self.params
        rho = self.rho(x, t)
        u = self.u(x, t)
        rho_x = 2 * np.pi * a * np.cos(2 * np.pi * x) * e
        u_x = np.pi * a * np.sin(2 * np.pi * x) * e
        u_xx = 2 * np.pi ** 2 * a * np.cos(2 * np.pi * x) * e
        b_x = -np.pi * a * np.sin(np.pi * x) * e
        pressure_x = p.A * p.gamma * rho ** (p.gamma - 1.0) * rho_x
        return rho * (-u + u * u_x) + pressure_x + self.b(x, t) * b_x - p.lam * u_xx

    def source_b(self, x, t):
        a, e = self.amplitude, math.exp(-t)
        b = self.b(x, t)
        u_x = np.pi * a * np.sin(2 * np.pi * x) * e
        b_x = -np.pi * a * np.sin(np.pi * x) * e
        b_xx = -np.pi ** 2 * a * np.cos(np.pi * x) * e
        return -b + u_x * b + self.u(x, t) * b_x - self.nu * b_xx

    def boundary_values(self, t: float) -> Tuple[float, float]:
        return float(self.b(0.0, t)), float(self.b(1.0, t))

    def exact_state(self, grid: Grid, t: float) -> State:
        u = self.u(grid.faces, t)
        u[0] = u[-1] = 0.0
        return State(self.rho(grid.cell_centers, t), u, self.b(grid.cell_centers, t), t)

    def config(self, grid_n: int, t_final: float, cfl: float = 0.5) -> ScenarioConfig:
        # the boundary signal is replaced by boundary_values through the hooks
        boundary = BoundaryMagnetic.constant(0.0, 0.0) if self.nu > 0 else BoundaryMagnetic.none()
        return ScenarioConfig(params=self.params, nu=self.nu, grid_n=grid_n, t_final=t_final,
                              initial=InitialData.constant(self.rho_bar), boundary_b=boundary, cfl=cfl)


def standard_case(params: Optional[FluidParams] = None, nu: float = 0.01) -> ManufacturedCase:
    return ManufacturedCase(params or FluidParams(), nu)


def constant_case(params: Optional[FluidParams] = None, nu: float = 0.01, rho_bar: float = 2.0) -> ManufacturedCase:
    return ManufacturedCase(params or FluidParams(), nu, rho_bar, 0.0)


@dataclass
class OrderStudy:
    grids: List[int]
    errors: Dict[str, List[float]]
    orders: Dict[str, List[float]]
    status: str

    def passed(self, window: Tuple[float, float] = ORDER_WINDOW) -> bool:
        if self.status == "exact":
            return True
        if self.status != "ok":
            return False
        return all(window[0] <= order <= window[1] for orders in self.orders.values() for order in orders)


def _mms_level(task) -> Tuple[float, float, float]:
    case, n, t_final, cfl = task
    config = case.config(n, t_final, cfl)
    grid = config.grid
    hooks = SolverHooks(sources=case, boundary_values=case.boundary_values if case.nu > 0 else None)
    result = run(config, hooks=hooks, initial_state=case.exact_state(grid, 0.0))
    final = result.final_state
    exact = case.exact_state(grid, final.time)
    return (l2_norm(final.rho - exact.rho, grid), l2_norm(final.u - exact.u, grid),
            l2_norm(final.b - exact.b, grid))


def mms_order_study(case: ManufacturedCase, system: str, grid_ladder: Sequence[int] = (128, 256, 512, 1024),
                    t_final: float = 0.1, cfl: float = 0.5, workers: Optional[int] = None) -> OrderStudy:
    """L2 errors against the manufactured fields on each grid and log2 ratios between neighbours"""
    if system not in ("resistive", "nonresistive"):
        raise UsageError(f"system must be resistive or nonresistive (got '{system}')")
    if system != case.system:
        raise UsageError(f"{system} study needs a case with {'nu > 0' if system == 'resistive' else 'nu = 0'}")
    grids = sorted(int(n) for n in grid_ladder)
    if len(grids) < 2:
        raise UsageError("an order study needs at least two grids")

    levels = parallel_map(_mms_level, [(case, n, t_final, cfl) for n in grids], workers)
    errors = {name: [level[k] for level in levels] for k, name in enumerate(FIELDS)}
    if all(e <= EXACT_TOL for values in errors.values() for e in values):
        logger.info(f"MMS {system}: errors at roundoff on every grid")
        return OrderStudy(grids, errors, {name: [] for name in FIELDS}, "exact")

    orders: Dict[str, List[float]] = {}
    status = "ok"
    for name, values in errors.items():
        orders[name] = [math.log2(c / f) if f > 0 else math.inf for c, f in zip(values, values[1:])]
        if any(f >= c for c, f in zip(values, values[1:])):
            logger.warning(f"MMS {system}: {name} errors not monotone across grids {values}")
            status = "inconclusive"
    logger.info(f"MMS {system} orders: " + ", ".join(f"{k}={v}" for k, v in orders.items()))
    return OrderStudy(grids, errors, orders, status)


@dataclass
class SelfConvergence:
    grids: List[int]
    differences: Dict[str, List[float]]
    ratios: Dict[str, List[float]]
    status: str
    window: Tuple[float, float] = RATIO_WINDOW


def _final_state(config: ScenarioConfig) -> State:
    return run(config).final_state


def self_convergence(config: ScenarioConfig, refinements: int = 3,
                     window: Tuple[float, float] = RATIO_WINDOW,
                     workers: Optional[int] = None) -> SelfConvergence:
    """||run(n)-run(2n)|| / ||run(2n)-run(4n)|| per field, finer runs cell-averaged onto the coarser grid"""
    if refinements < 3:
        raise UsageError(f"self-convergence needs at least 3 refinement levels (got {refinements})")
    grids = [config.grid_n * 2 ** k for k in range(refinements)]
    finals = parallel_map(_final_state, [replace(config, grid_n=n) for n in grids], workers)

    differences: Dict[str, List[float]] = {name: [] for name in FIELDS}
    for k in range(refinements - 1):
        coarse_grid = Grid(grids[k])
        fine = restrict_to_coarse(finals[k + 1], 2)
        for name in FIELDS:
            differences[name].append(l2_norm(getattr(finals[k], name) - getattr(fine, name), coarse_grid))

    if all(d <= EXACT_TOL for values in differences.values() for d in values):
        return SelfConvergence(grids, differences, {name: [] for name in FIELDS}, "not-applicable", window)

    ratios: Dict[str, List[float]] = {}
    status = "ok"
    for name, values in differences.items():
        if all(d <= EXACT_TOL for d in values):
            ratios[name] = []
            continue
        ratios[name] = [c / f if f > 0 else math.inf for c, f in zip(values, values[1:])]
        if any(not window[0] <= r <= window[1] for r in ratios[name]):
            status = "out-of-window"
    if status != "ok":
        logger.warning(f"Self-convergence ratios outside {window}: {ratios} (under-resolved?)")
    return SelfConvergence(grids, differences, ratios, status, window)


@dataclass
class RefinementStudy:
    name: str
    grids: List[int]
    residuals: List[float]
    ratios: List[float] = field(default_factory=list)

    def passed(self, min_ratio: float = MIN_REFINEMENT_RATIO) -> bool:
        return bool(self.ratios) and all(r >= min_ratio for r in self.ratios)


def _energy_level(config: ScenarioConfig) -> float:
    return abs(energy_balance_residual(run(config).invariant_series))


class _FluxResidualMonitor:
    """Time-averaged flux-identity residual over every step of a run"""

    def __init__(self, params: FluidParams):
        self.params = params
        self.previous: Optional[State] = None
        self.weighted = 0.0
        self.span = 0.0

    def __call__(self, state: State):
        if self.previous is not None:
            dt = state.time - self.previous.time
            if dt > 0:
                self.weighted += dt * flux_gradient_identity_residual(state, self.params, self.previous, dt)
                self.span += dt
        self.previous = state

    @property
    def mean(self) -> float:
        return self.weighted / self.span if self.span > 0 else 0.0


def _flux_level(config: ScenarioConfig) -> float:
    monitor = _FluxResidualMonitor(config.params)
    run(config, observer=monitor)
    return monitor.mean


def _refinement_study(name: str, level, config: ScenarioConfig, levels: int,
                      workers: Optional[int]) -> RefinementStudy:
    grids = [config.grid_n * 2 ** k for k in range(levels)]
    residuals = parallel_map(level, [replace(config, grid_n=n) for n in grids], workers)
    ratios = [c / f if f > 0 else math.inf for c, f in zip(residuals, residuals[1:])]
    logger.info(f"{name}: residuals {residuals}, ratios {ratios}")
    return RefinementStudy(name, grids, residuals, ratios)


def energy_refinement_study(config: ScenarioConfig, levels: int = 3,
                            workers: Optional[int] = None) -> RefinementStudy:
    """|E(T) + dissipation - E(0) - boundary work| on successively halved (dx, dt)"""
    return _refinement_study("energy balance", _energy_level, config, levels, workers)


def flux_identity_refinement_study(config: ScenarioConfig, levels: int = 3,
                                   workers: Optional[int] = None) -> RefinementStudy:
    """Time-averaged ||F_x - rho u_dot|| on successively halved (dx, dt)"""
    return _refinement_study("flux identity", _flux_level, config, levels, workers)


def mass_conservation_check(config: ScenarioConfig, tol: float = 1e-12) -> CheckResult:
    """Relative drift of the total mass over a run"""
    result = run(config)
    masses = np.array([record.total_mass for record in result.invariant_series])
    drift = float(np.max(np.abs(masses - masses[0])) / abs(masses[0]))
    system = "resistive" if config.resistive else "non-resistive"
    return CheckResult(f"mass conservation ({system})", drift <= tol, drift,
                       f"{result.step_count} steps")


SCALES = {
    "quick": {
        "trivial_n": 64, "trivial_T": 0.1,
        "mass_n": 64, "mass_T": 0.2,
        "refine_n": 32, "refine_T": 0.05,
        "mms_grids": (32, 64, 128), "mms_T": 0.05,
        "sweep_n": 128, "sweep_T": 0.05, "sweep_ladder": (1e-1, 3e-2, 1e-2),
        "layer_n": 256, "layer_T": 0.05, "layer_ladder": (1e-1, 1e-2, 1e-3),
    },
    "desk": {
        "trivial_n": 256, "trivial_T": 1.0,
        "mass_n": 256, "mass_T": 16.0,
        "refine_n": 128, "refine_T": 0.25,
        "mms_grids": (128, 256, 512, 1024), "mms_T": 0.1,
        "sweep_n": 4096, "sweep_T": 0.25, "sweep_ladder": (1e-2, 3e-3, 1e-3, 3e-4, 1e-4),
        "layer_n": 1024, "layer_T": 0.25, "layer_ladder": (1e-2, 1e-3, 1e-4),
    },
}


def smooth_config(grid_n: int, t_final: float, nu: float = 0.0) -> ScenarioConfig:
    """Smooth data used by the conservation and refinement checks"""
    boundary = BoundaryMagnetic.constant(0.0, 0.0) if nu > 0 else BoundaryMagnetic.none()
    return ScenarioConfig(nu=nu, grid_n=grid_n, t_final=t_final,
                          initial=InitialData.smooth(1.0, 0.1, 0.1, 0.1), boundary_b=boundary)


def _guarded(name: str, check) -> List[CheckResult]:
    try:
        return check()
    except SolverError as e:
        logger.error(f"{name}: {e}")
        return [CheckResult(name, False, None, f"solver failure: {e}")]


def _study_checks(sizes: Dict, workers: Optional[int]) -> List[CheckResult]:
    checks: List[CheckResult] = []
    base = smooth_config(sizes["sweep_n"], sizes["sweep_T"])
    spec = SweepSpec(base, sizes["sweep_ladder"])
    sweep = run_sweep(spec, workers)
    for column in ("b_diff", "rho_diff"):
        fit = sweep.fits.get(column)
        ok = fit is not None and fit.exponent >= 0.2 and fit.r_squared >= 0.9
        detail = f"exponent {fit.exponent:.3f}, r2 {fit.r_squared:.3f}" if fit else "no fit"
        checks.append(CheckResult(f"vanishing resistivity rate {column}", ok,
                                  fit.exponent if fit else None, detail))

    small = SweepSpec(smooth_config(32, 0.02), (1e-1, 3e-2, 1e-2))
    serial = run_sweep(small, 1).to_frame().to_csv(float_format="%.17g")
    pooled = run_sweep(small, 2).to_frame().to_csv(float_format="%.17g")
    checks.append(CheckResult("determinism serial vs pool", serial == pooled))

    scn = LayerScenario(nu_ladder=sizes["layer_ladder"], t_final=sizes["layer_T"], grid_n=sizes["layer_n"])
    layer = run_layer_study(scn, workers)
    checks.append(layer_dichotomy_check(layer, scn.boundary_b.peak_amplitude()))
    velocity = velocity_no_layer_check(layer)
    ok = velocity.exponent is not None and velocity.exponent >= 0.35 and velocity.u_sup_decreasing
    checks.append(CheckResult("no velocity layer", ok, velocity.exponent,
                              f"sup|u| strictly decreasing={velocity.u_sup_decreasing}"))
    weighted = layer.fits.get("weighted_sup")
    checks.append(CheckResult("weighted interior gradient", weighted is not None and weighted.exponent >= 0.35,
                              weighted.exponent if weighted else None))
    thickness = layer.fits.get("thickness")
    checks.append(CheckResult("thickness scaling",
                              thickness is not None and 0.35 <= thickness.exponent <= 0.65,
                              thickness.exponent if thickness else None))
    checks.append(density_bounds_check(layer, scn.rho_bar))
    return checks


def run_acceptance_suite(scale: str = "quick", include_studies: bool = False,
                         workers: Optional[int] = None) -> List[CheckResult]:
    """Every acceptance check at the requested scale; studies (sweep, layer) only on request"""
    if scale not in SCALES:
        raise UsageError(f"unknown scale '{scale}' (expected one of {', '.join(SCALES)})")
    sizes = SCALES[scale]
    checks: List[CheckResult] = []

    for rho_bar, nu in ((1.0, 0.0), (1.0, 1e-3)):
        checks += _guarded("trivial solution",
                           lambda: [trivial_solution_check(rho_bar, nu, sizes["trivial_n"], sizes["trivial_T"])])
    for nu in (0.0, 1e-3):
        checks += _guarded("mass conservation",
                           lambda: [mass_conservation_check(smooth_config(sizes["mass_n"], sizes["mass_T"], nu))])

    refine = smooth_config(sizes["refine_n"], sizes["refine_T"])

    def refinement_checks() -> List[CheckResult]:
        out = []
        for study in (energy_refinement_study(refine, 3, workers), flux_identity_refinement_study(refine, 3, workers)):
            worst = min(study.ratios) if study.ratios else None
            out.append(CheckResult(f"{study.name} refinement", study.passed(), worst,
                                   "ratios " + ", ".join(f"{r:.3f}" for r in study.ratios)))
        return out

    checks += _guarded("refinement", refinement_checks)

    def convergence_checks() -> List[CheckResult]:
        study = self_convergence(refine, 3, workers=workers)
        worst = min((r for ratios in study.ratios.values() for r in ratios), default=None)
        detail = "; ".join(f"{name} " + ", ".join(f"{r:.3f}" for r in ratios)
                           for name, ratios in study.ratios.items() if ratios)
        return [CheckResult("self-convergence", study.status == "ok", worst, detail or study.status)]

    checks += _guarded("self-convergence", convergence_checks)

    def mms_checks() -> List[CheckResult]:
        out = []
        for system, case in (("resistive", standard_case(nu=0.01)), ("nonresistive", standard_case(nu=0.0))):
            study = mms_order_study(case, system, sizes["mms_grids"], sizes["mms_T"], workers=workers)
            worst = min((o for orders in study.orders.values() for o in orders), default=None)
            out.append(CheckResult(f"MMS order ({system})", study.passed(), worst, study.status))
        return out

    checks += _guarded("MMS order", mms_checks)

    if include_studies:
        checks += _guarded("studies", lambda: _study_checks(sizes, workers))

    failed = [c for c in checks if not c.passed]
    logger.info(f"Acceptance suite ({scale}): {len(checks) - len(failed)}/{len(checks)} checks passed")
    return checks

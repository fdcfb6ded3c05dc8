#!/usr/bin/env python3
"""
Magnetic boundary-layer study.

Starts the resistive system from the rest state (rho_bar, 0, 0) and drives it
with a boundary signal for b. For every resistivity on the ladder it records
the sup-in-time of b and rho - rho_bar on the interior (delta, 1-delta) with
delta = nu**p and on the whole domain, the velocity norms, the weighted
interior gradient and the epsilon-level layer thickness at t = T.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from mhd_core import (
    BoundaryMagnetic, CheckResult, ConfigError, DomainError, FluidParams, InitialData,
    InsufficientDataError, ScenarioConfig, SolverError, State, interior_linf,
    linf_norm, sorted_descending, weighted_h1_integral,
)
from mhd_diagnostics import ux_l2
from mhd_solver import run
from resistivity_limit import MIN_FIT_POINTS, RateFit, fit_rate, monotone_decreasing_in_nu, parallel_map

logger = logging.getLogger(__name__)

# grid must resolve sqrt(nu_min) by this many cells
LAYER_RESOLUTION = 8.0


@dataclass(frozen=True)
class LayerScenario:
    """Rest state driven by boundary data over a ladder of resistivities"""
    params: FluidParams = FluidParams()
    rho_bar: float = 1.0
    boundary_b: BoundaryMagnetic = BoundaryMagnetic.ramp(1.0, 1.0, 0.05)
    nu_ladder: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    delta_exponent: float = 0.4
    epsilon: float = 0.01
    t_final: float = 0.25
    grid_n: int = 1024
    cfl: float = 0.5

    def __post_init__(self):
        if not self.rho_bar > 0:
            raise ConfigError(f"rho_bar must be > 0 (got {self.rho_bar})")
        if not 0 < self.delta_exponent < 0.5:
            raise ConfigError(f"delta exponent p must lie in (0, 1/2) so that nu**p >> nu**(1/2) (got {self.delta_exponent})")
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"thickness threshold epsilon must lie in (0,1) (got {self.epsilon})")
        if self.boundary_b.kind == "none":
            raise ConfigError("a layer study needs a magnetic boundary signal")
        ladder = sorted_descending(self.nu_ladder)
        if not ladder:
            raise ConfigError("nu_ladder must not be empty")
        if any(not 0 < nu < 1 for nu in ladder):
            raise ConfigError("every nu in the ladder must lie in (0,1)")
        if len(set(ladder)) != len(ladder):
            raise ConfigError("nu_ladder entries must be distinct")
        object.__setattr__(self, "nu_ladder", ladder)
        if self.boundary_b.is_trivial:
            logger.warning("Boundary signal is identically zero; the study reduces to the trivial solution")
        # validates t_final, cfl and grid_n
        self.config(ladder[0])

    def delta(self, nu: float) -> float:
        """nu**p snapped to the face lattice"""
        dx = 1.0 / self.grid_n
        k = max(1, int(round(nu ** self.delta_exponent / dx)))
        k = min(k, (self.grid_n - 1) // 2)
        return k * dx

    def config(self, nu: float) -> ScenarioConfig:
        return ScenarioConfig(params=self.params, nu=nu, grid_n=self.grid_n, t_final=self.t_final,
                              initial=InitialData.constant(self.rho_bar), boundary_b=self.boundary_b,
                              cfl=self.cfl)

    def describe(self) -> str:
        ladder = ", ".join(f"{nu:g}" for nu in self.nu_ladder)
        return (f"layer rho_bar={self.rho_bar:g} boundary={self.boundary_b.describe()} ladder=[{ladder}] "
                f"p={self.delta_exponent:g} eps={self.epsilon:g} n={self.grid_n} T={self.t_final:g}")


@dataclass
class LayerRow:
    nu: float
    delta: float
    interior_b: float
    interior_rho: float
    full_b: float
    full_rho: float
    u_sup: float
    ux_sq_sup: float
    weighted_sup: float
    thickness: float
    rho_min: float
    rho_max: float


LAYER_FIT_COLUMNS = ("ux_sq_sup", "weighted_sup", "thickness")


@dataclass
class LayerReport:
    rows: List[LayerRow] = field(default_factory=list)
    fits: Dict[str, Optional[RateFit]] = field(default_factory=dict)
    profiles: Dict[float, np.ndarray] = field(default_factory=dict)

    def column(self, name: str) -> List[float]:
        return [getattr(row, name) for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=list(LayerRow.__dataclass_fields__))

    def fit_frame(self) -> pd.DataFrame:
        records = []
        for name in LAYER_FIT_COLUMNS:
            fit = self.fits.get(name)
            records.append({
                "column": name,
                "exponent": fit.exponent if fit else np.nan,
                "prefactor": fit.prefactor if fit else np.nan,
                "r_squared": fit.r_squared if fit else np.nan,
            })
        return pd.DataFrame(records)


def thickness_estimate(b_profile: np.ndarray, boundary_amplitude: float, epsilon: float) -> float:
    """Smallest face-lattice delta with sup over (delta, 1-delta) of |b| <= epsilon*amplitude; 1/2 if none"""
    if not boundary_amplitude > 0:
        raise DomainError(f"boundary amplitude must be > 0 (got {boundary_amplitude})")
    b = np.abs(np.asarray(b_profile, dtype=float))
    n = len(b)
    if n == 0:
        raise DomainError("empty b profile")
    violating = np.nonzero(b > epsilon * boundary_amplitude)[0]
    if len(violating) == 0:
        return 0.0
    # cell i sits inside (k dx, 1 - k dx) exactly when min(i, n-1-i) >= k
    depth = np.minimum(violating, n - 1 - violating)
    k = int(depth.max()) + 1
    return min(k / n, 0.5)


class _LayerMonitor:
    """Per-step observer keeping the running sups of one layer run"""

    def __init__(self, config: ScenarioConfig, rho_bar: float, delta: float):
        self.grid = config.grid
        self.rho_bar = rho_bar
        self.delta = delta
        self.interior_b = 0.0
        self.interior_rho = 0.0
        self.full_b = 0.0
        self.full_rho = 0.0
        self.u_sup = 0.0
        self.ux_sq_sup = 0.0
        self.weighted_sup = 0.0
        self.rho_min = np.inf
        self.rho_max = -np.inf

    def __call__(self, state: State):
        grid = self.grid
        drho = state.rho - self.rho_bar
        self.interior_b = max(self.interior_b, interior_linf(state.b, grid, self.delta))
        self.interior_rho = max(self.interior_rho, interior_linf(drho, grid, self.delta))
        self.full_b = max(self.full_b, linf_norm(state.b, grid))
        self.full_rho = max(self.full_rho, linf_norm(drho, grid))
        self.u_sup = max(self.u_sup, linf_norm(state.u, grid))
        self.ux_sq_sup = max(self.ux_sq_sup, ux_l2(state) ** 2)
        self.weighted_sup = max(self.weighted_sup, weighted_h1_integral(state.rho, state.b, grid))
        self.rho_min = min(self.rho_min, float(state.rho.min()))
        self.rho_max = max(self.rho_max, float(state.rho.max()))


def _layer_row(task) -> Tuple[str, object]:
    scn, nu = task
    config = scn.config(nu)
    delta = scn.delta(nu)
    monitor = _LayerMonitor(config, scn.rho_bar, delta)
    try:
        result = run(config, observer=monitor)
    except SolverError as e:
        return "error", (nu, str(e), e.time)
    final_b = result.final_state.b
    amplitude = scn.boundary_b.amplitude(scn.t_final)
    thickness = thickness_estimate(final_b, amplitude, scn.epsilon) if amplitude > 0 else 0.0
    row = LayerRow(
        nu=nu, delta=delta,
        interior_b=monitor.interior_b, interior_rho=monitor.interior_rho,
        full_b=monitor.full_b, full_rho=monitor.full_rho,
        u_sup=monitor.u_sup, ux_sq_sup=monitor.ux_sq_sup, weighted_sup=monitor.weighted_sup,
        thickness=thickness, rho_min=monitor.rho_min, rho_max=monitor.rho_max,
    )
    logger.info(f"nu={nu:.3g}: interior|b|={row.interior_b:.3e} full|b|={row.full_b:.3e} "
                f"tau={row.thickness:.4f} ({result.step_count} steps, {result.wall_time:.1f}s)")
    return "ok", (row, final_b.copy())


def run_layer_study(scn: LayerScenario, workers: Optional[int] = None) -> LayerReport:
    """One resistive run per ladder entry, then fits of the scaling columns"""
    dx = 1.0 / scn.grid_n
    nu_min = min(scn.nu_ladder)
    if dx > np.sqrt(nu_min) / LAYER_RESOLUTION:
        raise ConfigError(f"grid does not resolve the layer: dx={dx:.3g} > sqrt(nu_min)/{LAYER_RESOLUTION:g}"
                          f"={np.sqrt(nu_min) / LAYER_RESOLUTION:.3g}; raise grid_n")
    logger.info(f"Layer study: {scn.describe()}")

    report = LayerReport()
    for status, payload in parallel_map(_layer_row, [(scn, nu) for nu in scn.nu_ladder], workers):
        if status == "error":
            nu, message, when = payload
            logger.error(f"Layer study aborted at nu={nu:g}: {message}")
            error = SolverError(f"run failed for nu={nu:g}: {message}", when)
            error.nu = nu
            raise error
        row, profile = payload
        report.rows.append(row)
        report.profiles[row.nu] = profile
    report.rows.sort(key=lambda row: -row.nu)

    for name in LAYER_FIT_COLUMNS:
        values = report.column(name)
        if not any(values):
            report.fits[name] = None
            continue
        try:
            report.fits[name] = fit_rate([(row.nu, getattr(row, name)) for row in report.rows])
        except InsufficientDataError as e:
            logger.warning(f"No exponent for {name}: {e}")
            report.fits[name] = None
    return report


@dataclass
class VelocityLayerCheck:
    exponent: Optional[float]
    u_sup_decreasing: bool
    applicable: bool = True


def velocity_no_layer_check(report: LayerReport) -> VelocityLayerCheck:
    """Exponent of sup_t ||u_x||^2 in nu and whether sup_t |u| shrinks with nu"""
    if len(report.rows) < MIN_FIT_POINTS:
        raise InsufficientDataError(f"need at least {MIN_FIT_POINTS} ladder points, got {len(report.rows)}")
    rows = sorted(report.rows, key=lambda row: -row.nu)
    u_sup = [row.u_sup for row in rows]
    decreasing = all(b < a for a, b in zip(u_sup, u_sup[1:]))
    values = [row.ux_sq_sup for row in rows]
    if not any(values):
        return VelocityLayerCheck(None, decreasing, applicable=False)
    fit = fit_rate([(row.nu, row.ux_sq_sup) for row in rows])
    return VelocityLayerCheck(fit.exponent, decreasing)


def density_bounds_check(report: LayerReport, rho_bar: float, lower: float = 0.1,
                         upper: float = 10.0, spread: float = 0.2) -> CheckResult:
    """Uniform density bounds across the ladder, roughly independent of nu"""
    if not report.rows:
        raise InsufficientDataError("density bounds need at least one ladder row")
    mins = np.array(report.column("rho_min"))
    maxs = np.array(report.column("rho_max"))
    within = mins.min() >= lower * rho_bar and maxs.max() <= upper * rho_bar
    min_spread = (mins.max() - mins.min()) / mins.max()
    max_spread = (maxs.max() - maxs.min()) / maxs.max()
    passed = bool(within and min_spread < spread and max_spread < spread)
    detail = (f"rho in [{mins.min():.4g}, {maxs.max():.4g}], spread of min {min_spread:.2%}, "
              f"spread of max {max_spread:.2%}")
    return CheckResult("density bounds", passed, float(max(min_spread, max_spread)), detail)


def layer_dichotomy_check(report: LayerReport, peak_amplitude: float, decay: float = 0.25,
                          persistence: float = 0.5) -> CheckResult:
    """Interior sup |b| vanishes along the ladder while the full-domain sup stays of order one"""
    if len(report.rows) < 2:
        raise InsufficientDataError("the dichotomy needs at least two ladder rows")
    rows = sorted(report.rows, key=lambda row: -row.nu)
    interior = [row.interior_b for row in rows]
    monotone = monotone_decreasing_in_nu(interior)
    ratio = interior[-1] / interior[0] if interior[0] > 0 else 0.0
    full_min = min(row.full_b for row in rows)
    persists = full_min >= persistence * peak_amplitude
    rho_monotone = monotone_decreasing_in_nu([row.interior_rho for row in rows])
    passed = bool(monotone and ratio <= decay and persists)
    detail = (f"interior |b| ratio {ratio:.3g} (<= {decay:g}), monotone={monotone}, "
              f"min full |b| {full_min:.3g} (>= {persistence * peak_amplitude:.3g}), "
              f"interior rho monotone={rho_monotone}")
    return CheckResult("layer dichotomy", passed, ratio, detail)

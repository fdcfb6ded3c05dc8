#!/usr/bin/env python3
"""
Vanishing-resistivity study.
Runs matched resistive / non-resistive scenarios over a ladder of
resistivities, measures sup-in-time difference norms on the shared grid and
fits power-law exponents in nu.
"""

import logging
import multiprocessing as mp
import os
from dataclasses import dataclass, field, replace, asdict
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from mhd_core import (
    BoundaryMagnetic, ConfigError, InsufficientDataError, ScenarioConfig, SolverError,
    State, l2_norm, restrict_to_coarse, sorted_descending, state_difference_norms,
    uniform_times, weighted_h1_integral,
)
from mhd_solver import run

logger = logging.getLogger(__name__)

# Fitting below this many points is refused.
MIN_FIT_POINTS = 3
SATURATION_FACTOR = 10.0


class RateFit(NamedTuple):
    exponent: float
    prefactor: float
    r_squared: float


def fit_rate(points: Sequence[Tuple[float, float]]) -> RateFit:
    """Least-squares line through (log nu, log value); the slope is the exponent"""
    if len(points) < MIN_FIT_POINTS:
        raise InsufficientDataError(f"need at least {MIN_FIT_POINTS} points for a rate fit, got {len(points)}")
    nus = np.array([p[0] for p in points], dtype=float)
    values = np.array([p[1] for p in points], dtype=float)
    if np.any(nus <= 0) or len(set(nus.tolist())) != len(nus):
        raise InsufficientDataError("rate fits need distinct positive nu values")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise InsufficientDataError("rate fits need positive finite values")
    x = np.log(nus)
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return RateFit(0.0, float(np.exp(y.mean())), 0.0)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    return RateFit(float(slope), float(np.exp(intercept)), 1.0 - ss_res / ss_tot)


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count from the argument, MHD1D_THREADS, or the CPU count"""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MHD1D_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MHD1D_THREADS must be an integer (got '{env}')")
    return os.cpu_count() or 1


def parallel_map(func: Callable, tasks: List, workers: Optional[int] = None) -> List:
    """Ordered map over a process pool; serial when one worker suffices"""
    count = min(resolve_workers(workers), len(tasks))
    if count <= 1:
        return [func(task) for task in tasks]
    with mp.Pool(processes=count) as pool:
        return pool.map(func, tasks)


@dataclass(frozen=True)
class SweepSpec:
    """A resistivity ladder around one non-resistive reference scenario"""
    base: ScenarioConfig
    nu_ladder: Tuple[float, ...]
    boundary_b: BoundaryMagnetic = BoundaryMagnetic.constant(0.0, 0.0)
    comparison_count: int = 32
    saturation_guard: bool = True

    def __post_init__(self):
        ladder = sorted_descending(self.nu_ladder)
        if not ladder:
            raise ConfigError("nu_ladder must not be empty")
        if any(not 0 < nu < 1 for nu in ladder):
            raise ConfigError("every nu in the ladder must lie in (0,1)")
        if len(set(ladder)) != len(ladder):
            raise ConfigError("nu_ladder entries must be distinct")
        if self.boundary_b.kind == "none":
            raise ConfigError("the resistive runs of a sweep need a magnetic boundary signal")
        if self.comparison_count < 1:
            raise ConfigError("comparison_count must be >= 1")
        object.__setattr__(self, "nu_ladder", ladder)
        object.__setattr__(self, "base", self.base.with_resistivity(0.0))

    @property
    def comparison_times(self) -> Tuple[float, ...]:
        return uniform_times(self.base.t_final, self.comparison_count)

    @property
    def reference(self) -> ScenarioConfig:
        return replace(self.base, snapshot_times=self.comparison_times)

    def resistive_config(self, nu: float) -> ScenarioConfig:
        return replace(self.base.with_resistivity(nu, self.boundary_b), snapshot_times=self.comparison_times)

    def describe(self) -> str:
        ladder = ", ".join(f"{nu:g}" for nu in self.nu_ladder)
        return f"sweep ladder=[{ladder}] boundary={self.boundary_b.describe()} base: {self.base.describe()}"


@dataclass
class SweepRow:
    nu: float
    rho_diff: float
    u_diff: float
    b_diff: float
    ux_diff_integral: float
    ux_sq_sup: float
    weighted_sup: float


FIT_COLUMNS = ("rho_diff", "u_diff", "b_diff", "ux_diff_integral", "ux_sq_sup", "weighted_sup")
SATURATION_FIELDS = {"rho_diff": "rho", "u_diff": "u", "b_diff": "b"}


@dataclass
class SweepReport:
    rows: List[SweepRow] = field(default_factory=list)
    fits: Dict[str, Optional[RateFit]] = field(default_factory=dict)
    discretization_error: Optional[Dict[str, float]] = None
    dropped: Dict[str, bool] = field(default_factory=dict)

    def column(self, name: str) -> List[float]:
        return [getattr(row, name) for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=["nu", *FIT_COLUMNS])

    def fit_frame(self) -> pd.DataFrame:
        records = []
        for name in FIT_COLUMNS:
            fit = self.fits.get(name)
            records.append({
                "column": name,
                "exponent": fit.exponent if fit else np.nan,
                "prefactor": fit.prefactor if fit else np.nan,
                "r_squared": fit.r_squared if fit else np.nan,
                "dropped_smallest_nu": bool(self.dropped.get(name, False)),
            })
        return pd.DataFrame(records)


def _snapshot_states(result, times: Sequence[float]) -> List[State]:
    return [result.snapshot_at(t) for t in times]


def _sweep_row(task) -> Tuple[str, object]:
    config, reference_states, times = task
    try:
        result = run(config)
    except SolverError as e:
        return "error", (config.nu, str(e), e.time)
    grid = config.grid
    states = _snapshot_states(result, times)
    diffs = np.array([state_difference_norms(s, r, grid) for s, r in zip(states, reference_states)])
    ux_diff_sq = [l2_norm(np.diff(s.u - r.u) / grid.dx, grid) ** 2 for s, r in zip(states, reference_states)]
    row = SweepRow(
        nu=config.nu,
        rho_diff=float(diffs[:, 0].max()),
        u_diff=float(diffs[:, 1].max()),
        b_diff=float(diffs[:, 2].max()),
        ux_diff_integral=float(trapezoid(ux_diff_sq, times)) if len(times) > 1 else 0.0,
        ux_sq_sup=max(r.ux_l2 ** 2 for r in result.invariant_series),
        weighted_sup=max(weighted_h1_integral(s.rho, s.b, grid) for s in states),
    )
    logger.info(f"nu={config.nu:.3g}: |b-b0|={row.b_diff:.3e} |rho-rho0|={row.rho_diff:.3e} "
                f"({result.step_count} steps, {result.wall_time:.1f}s)")
    return "ok", row


def estimate_discretization_error(reference: ScenarioConfig,
                                  coarse: Optional[List[State]] = None) -> Dict[str, float]:
    """sup over snapshots of ||run(n) - run(2n)|| per field for the reference scenario"""
    if coarse is None:
        coarse = _snapshot_states(run(reference), reference.snapshot_times)
    fine_config = replace(reference, grid_n=2 * reference.grid_n)
    fine_states = _snapshot_states(run(fine_config), reference.snapshot_times)
    fine = [restrict_to_coarse(s, 2) for s in fine_states]
    grid = reference.grid
    diffs = np.array([state_difference_norms(c, f, grid) for c, f in zip(coarse, fine)])
    return {"rho": float(diffs[:, 0].max()), "u": float(diffs[:, 1].max()), "b": float(diffs[:, 2].max())}


def _fit_column(report: SweepReport, name: str):
    points = [(row.nu, getattr(row, name)) for row in report.rows]
    report.dropped[name] = False
    if report.discretization_error and name in SATURATION_FIELDS and len(points) > MIN_FIT_POINTS:
        floor = SATURATION_FACTOR * report.discretization_error[SATURATION_FIELDS[name]]
        if points[-1][1] < floor:
            logger.warning(f"{name}: smallest nu={points[-1][0]:g} is within {SATURATION_FACTOR:g}x "
                           f"of the discretization error, dropped from the fit")
            points = points[:-1]
            report.dropped[name] = True
    try:
        report.fits[name] = fit_rate(points)
    except InsufficientDataError as e:
        logger.warning(f"No exponent for {name}: {e}")
        report.fits[name] = None


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> SweepReport:
    """Run the reference once and every ladder entry, then fit the columns"""
    grid = spec.base.grid
    if grid.dx > np.sqrt(min(spec.nu_ladder) * spec.base.t_final):
        logger.warning(f"dx={grid.dx:.3g} does not resolve the layer width sqrt(nu*T) at nu={min(spec.nu_ladder):g}")
    logger.info(f"Sweep over {len(spec.nu_ladder)} resistivities: {spec.base.describe()}")
    reference = run(spec.reference)
    times = list(spec.comparison_times)
    reference_states = _snapshot_states(reference, times)
    tasks = [(spec.resistive_config(nu), reference_states, times) for nu in spec.nu_ladder]

    report = SweepReport()
    for status, payload in parallel_map(_sweep_row, tasks, workers):
        if status == "error":
            nu, message, when = payload
            logger.error(f"Sweep aborted at nu={nu:g}: {message}")
            error = SolverError(f"run failed for nu={nu:g}: {message}", when)
            error.nu = nu
            raise error
        report.rows.append(payload)
    report.rows.sort(key=lambda row: -row.nu)

    if spec.saturation_guard and len(report.rows) > MIN_FIT_POINTS:
        report.discretization_error = estimate_discretization_error(spec.reference, reference_states)
    for name in FIT_COLUMNS:
        _fit_column(report, name)
    return report


def monotone_decreasing_in_nu(values: Sequence[float]) -> bool:
    """True when values (ordered by decreasing nu) never increase"""
    return all(b <= a for a, b in zip(values, values[1:]))

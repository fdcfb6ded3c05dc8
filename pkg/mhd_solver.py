#!/usr/bin/env python3
"""
Semi-implicit solver for the resistive and non-resistive 1D MHD systems.

Per step: conservative upwind continuity, velocity-form momentum with
explicit advection and total pressure and backward-Euler viscosity, then
conservative upwind induction with backward-Euler resistivity (nu > 0 only).
"""

import logging
import time as wallclock
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from mhd_core import (
    RHO_ABORT, DivergenceError, ScenarioConfig, SolverError, State, UsageError,
    VacuumError, pressure, sound_speed,
)
from mhd_diagnostics import InvariantRecord, make_invariant_record

logger = logging.getLogger(__name__)

# Stops closer than this (relative to T) count as reached.
TIME_EPS = 1e-12


@dataclass
class SolverHooks:
    """Injection points used by verification runs and oracle tests"""
    sources: Optional[object] = None
    frozen_velocity: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    boundary_values: Optional[Callable[[float], Tuple[float, float]]] = None


class StepperWorkspace:
    """Band storage and flux scratch reused across steps"""

    def __init__(self, n_cells: int):
        self.n_cells = n_cells
        self.band_u = np.zeros((3, max(n_cells - 1, 1)))
        self.band_b = np.zeros((3, n_cells))
        self.mass_flux = np.zeros(n_cells + 1)
        self.b_flux = np.zeros(n_cells + 1)

    def check(self, state: State):
        if state.n_cells != self.n_cells:
            raise UsageError(f"workspace sized for {self.n_cells} cells, state has {state.n_cells}")


@dataclass
class RunResult:
    snapshots: List[Tuple[float, State]] = field(default_factory=list)
    invariant_series: List[InvariantRecord] = field(default_factory=list)
    step_count: int = 0
    wall_time: float = 0.0
    final_state: Optional[State] = None

    def snapshot_at(self, t: float) -> State:
        for when, state in self.snapshots:
            if abs(when - t) <= TIME_EPS * max(1.0, abs(t)):
                return state
        raise KeyError(f"no snapshot at t={t}")


def _next_stop(t: float, config: ScenarioConfig) -> float:
    eps = TIME_EPS * config.t_final
    for stop in config.snapshot_times:
        if stop > t + eps:
            return stop
    return config.t_final


def cfl_dt(state: State, config: ScenarioConfig) -> float:
    """Smaller of the advective-acoustic and Alfven CFL steps, clamped to the next stop"""
    rho_min = float(np.min(state.rho))
    if not rho_min > RHO_ABORT:
        cell = int(np.argmin(state.rho))
        raise VacuumError(cell, state.time, rho_min)
    dx = 1.0 / state.n_cells
    c_s = sound_speed(state.rho, config.params)
    u_cell = np.maximum(np.abs(state.u[:-1]), np.abs(state.u[1:]))
    acoustic = float(np.max(u_cell + c_s))
    alfven = float(np.max(np.abs(state.b) / np.sqrt(state.rho)))
    if not (np.isfinite(acoustic) and np.isfinite(alfven)):
        raise DivergenceError(f"non-finite wave speed at t={state.time:.6g}", state.time)
    # no Alfven guard while b == 0
    dt = config.cfl * dx / acoustic
    if alfven > 0:
        dt = min(dt, config.cfl * dx / alfven)
    remaining = _next_stop(state.time, config) - state.time
    if remaining > 0:
        dt = min(dt, remaining)
    if not dt > 0:
        raise SolverError(f"degenerate time step {dt!r} at t={state.time:.6g}", state.time)
    return dt


def thomas_solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray,
                 band: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve a tridiagonal system; lower[0] and upper[-1] are ignored"""
    n = len(diag)
    if not (len(lower) == len(upper) == len(rhs) == n):
        raise UsageError("tridiagonal bands and right-hand side must have equal length")
    ab = np.empty((3, n)) if band is None or band.shape != (3, n) else band
    ab[0, 0] = 0.0
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    try:
        return scipy.linalg.solve_banded((1, 1), ab, np.array(rhs, dtype=float),
                                         overwrite_ab=True, overwrite_b=True)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"zero pivot in tridiagonal solve: {e}")
    except ValueError as e:
        raise DivergenceError(f"non-finite entries in tridiagonal solve: {e}")


def _source(hooks: Optional[SolverHooks], name: str, x: np.ndarray, t: float) -> Optional[np.ndarray]:
    if hooks is None or hooks.sources is None:
        return None
    return getattr(hooks.sources, f"source_{name}")(x, t)


def _advance_density(state: State, ws: StepperWorkspace, dt: float, hooks: Optional[SolverHooks]) -> np.ndarray:
    n = state.n_cells
    dx = 1.0 / n
    u = state.u
    flux = ws.mass_flux
    inner = u[1:-1]
    flux[1:-1] = inner * np.where(inner > 0, state.rho[:-1], state.rho[1:])
    flux[0] = flux[-1] = 0.0
    rho = state.rho - dt / dx * np.diff(flux)
    s = _source(hooks, "rho", (np.arange(n) + 0.5) * dx, state.time + 0.5 * dt)
    if s is not None:
        rho = rho + dt * s
    # pressure of the new density comes next; stop before it sees vacuum
    low = int(np.argmin(rho))
    if not rho[low] > RHO_ABORT:
        if not np.isfinite(rho[low]):
            raise DivergenceError(f"non-finite density at t={state.time + dt:.6g}", state.time + dt)
        raise VacuumError(low, state.time + dt, float(rho[low]))
    return rho


def _advance_velocity(state: State, rho: np.ndarray, config: ScenarioConfig, ws: StepperWorkspace,
                      dt: float, hooks: Optional[SolverHooks]) -> np.ndarray:
    n = state.n_cells
    dx = 1.0 / n
    t_new = state.time + dt
    if hooks is not None and hooks.frozen_velocity is not None:
        u_new = np.array(hooks.frozen_velocity(np.arange(n + 1) * dx, t_new), dtype=float)
        u_new[0] = u_new[-1] = 0.0
        return u_new

    u = state.u
    rho_face = 0.5 * (rho[:-1] + rho[1:])
    total_p = pressure(rho, config.params) + 0.5 * state.b ** 2
    inner = u[1:-1]
    ux_up = np.where(inner > 0, (inner - u[:-2]) / dx, (u[2:] - inner) / dx)
    rhs = rho_face * inner - dt * (rho_face * inner * ux_up + np.diff(total_p) / dx)
    s = _source(hooks, "u", np.arange(1, n) * dx, state.time + 0.5 * dt)
    if s is not None:
        rhs = rhs + dt * s

    r = dt * config.params.lam / dx ** 2
    off = np.full(n - 1, -r)
    u_new = np.zeros(n + 1)
    u_new[1:-1] = thomas_solve(off, rho_face + 2.0 * r, off, rhs, ws.band_u)
    return u_new


def _advect_magnetic(state: State, u_new: np.ndarray, ws: StepperWorkspace, dt: float,
                     hooks: Optional[SolverHooks]) -> np.ndarray:
    n = state.n_cells
    dx = 1.0 / n
    b = state.b
    flux = ws.b_flux
    inner = u_new[1:-1]
    flux[1:-1] = inner * np.where(inner > 0, b[:-1], b[1:])
    # u vanishes on the walls, so no boundary flux for either system
    flux[0] = flux[-1] = 0.0
    b_adv = b - dt / dx * np.diff(flux)
    s = _source(hooks, "b", (np.arange(n) + 0.5) * dx, state.time + 0.5 * dt)
    if s is not None:
        b_adv = b_adv + dt * s
    return b_adv


def _check_new_state(new: State):
    for name in ("rho", "u", "b"):
        if not np.all(np.isfinite(getattr(new, name))):
            raise DivergenceError(f"non-finite {name} at t={new.time:.6g}", new.time)
    low = int(np.argmin(new.rho))
    if new.rho[low] <= RHO_ABORT:
        raise VacuumError(low, new.time, float(new.rho[low]))


def step_resistive(state: State, config: ScenarioConfig, ws: StepperWorkspace, dt: float,
                   hooks: Optional[SolverHooks] = None) -> State:
    """One step of the resistive system with Dirichlet magnetic data"""
    if not config.resistive:
        raise UsageError("step_resistive needs nu > 0")
    ws.check(state)
    n = state.n_cells
    dx = 1.0 / n
    t_new = state.time + dt

    rho = _advance_density(state, ws, dt, hooks)
    u_new = _advance_velocity(state, rho, config, ws, dt, hooks)
    b_adv = _advect_magnetic(state, u_new, ws, dt, hooks)

    if hooks is not None and hooks.boundary_values is not None:
        b1, b2 = hooks.boundary_values(t_new)
    else:
        b1, b2 = config.boundary_b.values(t_new)
    r = config.nu * dt / dx ** 2
    diag = np.full(n, 1.0 + 2.0 * r)
    # ghost values 2*b_wall - b_adjacent
    diag[0] += r
    diag[-1] += r
    off = np.full(n, -r)
    rhs = b_adv.copy()
    rhs[0] += 2.0 * r * b1
    rhs[-1] += 2.0 * r * b2
    b_new = thomas_solve(off, diag, off, rhs, ws.band_b)

    new = State(rho, u_new, b_new, t_new)
    _check_new_state(new)
    return new


def step_nonresistive(state: State, config: ScenarioConfig, ws: StepperWorkspace, dt: float,
                      hooks: Optional[SolverHooks] = None) -> State:
    """One step of the non-resistive system; b takes no boundary data"""
    if config.resistive:
        raise UsageError("step_nonresistive needs nu = 0")
    ws.check(state)
    rho = _advance_density(state, ws, dt, hooks)
    u_new = _advance_velocity(state, rho, config, ws, dt, hooks)
    b_new = _advect_magnetic(state, u_new, ws, dt, hooks)
    new = State(rho, u_new, b_new, state.time + dt)
    _check_new_state(new)
    return new


def _boundary_at(config: ScenarioConfig, hooks: Optional[SolverHooks], t: float) -> Tuple[float, float]:
    if not config.resistive:
        return 0.0, 0.0
    if hooks is not None and hooks.boundary_values is not None:
        return hooks.boundary_values(t)
    return config.boundary_b.values(t)


def run(config: ScenarioConfig, hooks: Optional[SolverHooks] = None,
        observer: Optional[Callable[[State], None]] = None,
        initial_state: Optional[State] = None) -> RunResult:
    """Integrate from the configured initial data to t_final"""
    started = wallclock.perf_counter()
    grid = config.grid
    state = initial_state.copy() if initial_state is not None else config.initial.build(grid)
    state.validate()
    ws = StepperWorkspace(grid.n_cells)
    step = step_resistive if config.resistive else step_nonresistive
    logger.debug(f"Starting run: {config.describe()}")

    result = RunResult()
    record = make_invariant_record(state, config, None, _boundary_at(config, hooks, state.time))
    result.invariant_series.append(record)
    eps = TIME_EPS * config.t_final
    pending = list(config.snapshot_times)
    while pending and pending[0] <= state.time + eps:
        result.snapshots.append((pending.pop(0), state.copy()))
    if observer is not None:
        observer(state)

    while state.time < config.t_final - eps:
        dt = cfl_dt(state, config)
        stop = _next_stop(state.time, config)
        try:
            new = step(state, config, ws, dt, hooks)
        except SolverError as e:
            e.time = state.time + dt if e.time is None else e.time
            logger.error(f"Run failed at t={e.time:.6g}: {e}")
            raise
        if abs(new.time - stop) <= eps:
            new.time = stop
        state = new
        result.step_count += 1
        record = make_invariant_record(state, config, record, _boundary_at(config, hooks, state.time))
        result.invariant_series.append(record)
        while pending and pending[0] <= state.time + eps:
            result.snapshots.append((pending.pop(0), state.copy()))
        if observer is not None:
            observer(state)

    result.final_state = state
    result.wall_time = wallclock.perf_counter() - started
    logger.debug(f"Finished run in {result.step_count} steps ({result.wall_time:.2f}s)")
    return result

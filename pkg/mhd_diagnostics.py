#!/usr/bin/env python3
"""
Discrete diagnostics for the 1D MHD runs.
Effective viscous flux, material derivative, energy accounting and the
consistency residuals of the identities the analysis of the system relies on.
"""

import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mhd_core import (
    FluidParams, Grid, ScenarioConfig, State, UsageError,
    interpolate_face_to_center, pressure,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InvariantRecord:
    """Per-step integral quantities of a run"""
    time: float
    total_mass: float
    energy: float
    dissipation_rate: float
    dissipation_accum: float
    boundary_work_rate: float
    boundary_work: float
    rho_min: float
    rho_max: float
    b_sup: float
    ux_l2: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def grid_of(state: State) -> Grid:
    return Grid(state.n_cells)


def total_mass(state: State) -> float:
    return float(np.sum(state.rho)) / state.n_cells


def energy(state: State, params: FluidParams) -> float:
    """E = sum(rho u^2/2 + b^2/2 + A/(gamma-1) rho^gamma) dx"""
    dx = 1.0 / state.n_cells
    rho_face = 0.5 * (state.rho[:-1] + state.rho[1:])
    kinetic = 0.5 * np.sum(rho_face * state.u[1:-1] ** 2)
    magnetic = 0.5 * np.sum(state.b ** 2)
    internal = params.A / (params.gamma - 1.0) * np.sum(np.power(state.rho, params.gamma))
    return float((kinetic + magnetic + internal) * dx)


def velocity_gradient(state: State) -> np.ndarray:
    """u_x at cell centers"""
    return np.diff(state.u) * state.n_cells


def ux_l2(state: State) -> float:
    ux = velocity_gradient(state)
    return float(np.sqrt(np.sum(ux ** 2) / state.n_cells))


def wall_gradients(state: State, b1: float, b2: float) -> Tuple[float, float]:
    """b_x on the walls as seen by the ghost-cell diffusion stencil"""
    dx = 1.0 / state.n_cells
    return 2.0 * (state.b[0] - b1) / dx, 2.0 * (b2 - state.b[-1]) / dx


def magnetic_gradient_sq(state: State, b1: float, b2: float) -> float:
    """||b_x||^2 including the half cells next to the walls"""
    dx = 1.0 / state.n_cells
    interior = np.sum((np.diff(state.b) / dx) ** 2) * dx
    left, right = wall_gradients(state, b1, b2)
    return float(interior + 0.5 * dx * (left ** 2 + right ** 2))


def make_invariant_record(state: State, config: ScenarioConfig,
                          previous: Optional[InvariantRecord] = None,
                          boundary: Tuple[float, float] = (0.0, 0.0)) -> InvariantRecord:
    """Build the record for `state`, accumulating time integrals by trapezoid"""
    params = config.params
    ux = ux_l2(state)
    rate = params.lam * ux ** 2
    work_rate = 0.0
    if config.resistive:
        b1, b2 = boundary
        rate += config.nu * magnetic_gradient_sq(state, b1, b2)
        left, right = wall_gradients(state, b1, b2)
        work_rate = config.nu * (b2 * right - b1 * left)
    if previous is None:
        accum = 0.0
        work = 0.0
    else:
        span = state.time - previous.time
        accum = previous.dissipation_accum + 0.5 * (previous.dissipation_rate + rate) * span
        work = previous.boundary_work + 0.5 * (previous.boundary_work_rate + work_rate) * span
    return InvariantRecord(
        time=state.time,
        total_mass=total_mass(state),
        energy=energy(state, params),
        dissipation_rate=rate,
        dissipation_accum=accum,
        boundary_work_rate=work_rate,
        boundary_work=work,
        rho_min=float(np.min(state.rho)),
        rho_max=float(np.max(state.rho)),
        b_sup=float(np.max(np.abs(state.b))),
        ux_l2=ux,
    )


def effective_viscous_flux(state: State, params: FluidParams) -> np.ndarray:
    """F = lambda*u_x - P(rho) - b^2/2 at cell centers"""
    return params.lam * velocity_gradient(state) - pressure(state.rho, params) - 0.5 * state.b ** 2


def _upwind_gradient(u: np.ndarray, dx: float) -> np.ndarray:
    # one-sided difference of u taken from the side the flow comes from, interior faces only
    back = (u[1:-1] - u[:-2]) / dx
    ahead = (u[2:] - u[1:-1]) / dx
    return np.where(u[1:-1] > 0, back, ahead)


def material_derivative_u(state_prev: State, state_next: State, dt: float) -> np.ndarray:
    """u_dot = u_t + u*u_x on faces; wall faces report 0"""
    if not dt > 0:
        raise UsageError(f"time step must be > 0 (got {dt})")
    if len(state_prev.u) != len(state_next.u):
        raise UsageError("states come from different grids")
    dx = 1.0 / state_next.n_cells
    u = state_next.u
    out = np.zeros_like(u)
    out[1:-1] = (u[1:-1] - state_prev.u[1:-1]) / dt + u[1:-1] * _upwind_gradient(u, dx)
    return out


def flux_gradient_identity_residual(state: State, params: FluidParams, state_prev: State, dt: float) -> float:
    """L2 norm over interior faces of F_x - rho*u_dot"""
    dx = 1.0 / state.n_cells
    flux = effective_viscous_flux(state, params)
    flux_x = np.diff(flux) / dx
    rho_face = 0.5 * (state.rho[:-1] + state.rho[1:])
    residual = flux_x - rho_face * material_derivative_u(state_prev, state, dt)[1:-1]
    return float(np.sqrt(np.sum(residual ** 2) * dx))


def energy_balance_residual(records: Sequence[InvariantRecord], boundary_work: Optional[float] = None) -> float:
    """E(t) + dissipation - E(0) - boundary work at the last record"""
    if not records:
        raise UsageError("energy balance needs at least one record")
    first, last = records[0], records[-1]
    work = last.boundary_work if boundary_work is None else boundary_work
    return last.energy + last.dissipation_accum - first.energy - work


def nested_integral(b: np.ndarray, dx: float, from_left: bool = True) -> float:
    """Midpoint sums of int_0^1 (int_0^x b) dx, or of int_0^1 (int_x^1 b) dx"""
    if not from_left:
        b = b[::-1]
    inner = np.cumsum(b) * dx - 0.5 * b * dx
    return float(np.sum(inner) * dx)


def boundary_flux_formulas(state: State, state_prev: State, dt: float, nu: float,
                           b1: float, b2: float) -> Tuple[float, float]:
    """Residuals of the two wall formulas for nu*b_x at x=0 and x=1"""
    if not nu > 0:
        raise UsageError("the wall formulas for b_x hold for the resistive system only")
    if not dt > 0:
        raise UsageError(f"time step must be > 0 (got {dt})")
    n = state.n_cells
    dx = 1.0 / n
    b = state.b
    # second-order one-sided stencils on the nodes {wall, dx/2, 3dx/2}
    bx_left = (-8.0 * b1 + 9.0 * b[0] - b[1]) / (3.0 * dx)
    bx_right = (8.0 * b2 - 9.0 * b[-1] + b[-2]) / (3.0 * dx)
    ub = float(np.sum(interpolate_face_to_center(state.u, grid_of(state)) * b) * dx)
    d_left = (nested_integral(b, dx, True) - nested_integral(state_prev.b, dx, True)) / dt
    d_right = (nested_integral(b, dx, False) - nested_integral(state_prev.b, dx, False)) / dt
    right_left = nu * (b2 - b1) - d_left - ub
    right_right = nu * (b2 - b1) + d_right - ub
    return abs(nu * bx_left - right_left), abs(nu * bx_right - right_right)


def transport_residuals(state_prev: State, state_next: State, dt: float, params: FluidParams,
                        nu: float = 0.0) -> Tuple[float, float]:
    """L2 residuals of P_t + u P_x + gamma P u_x = 0 and (b^2)_t + u (b^2)_x + 2 b^2 u_x = 0"""
    if nu > 0:
        raise UsageError("transport identities are exact only for the non-resistive system")
    if not dt > 0:
        raise UsageError(f"time step must be > 0 (got {dt})")
    n = state_next.n_cells
    dx = 1.0 / n
    grid = grid_of(state_next)

    # density is advanced with the old velocity, b with the new one
    p_prev = pressure(state_prev.rho, params)
    p_next = pressure(state_next.rho, params)
    u_old = interpolate_face_to_center(state_prev.u, grid)
    ux_old = np.diff(state_prev.u) / dx
    p_res = (p_next - p_prev) / dt + u_old * np.gradient(p_next, dx) + params.gamma * p_next * ux_old

    b2_prev = state_prev.b ** 2
    b2_next = state_next.b ** 2
    u_new = interpolate_face_to_center(state_next.u, grid)
    ux_new = np.diff(state_next.u) / dx
    b_res = (b2_next - b2_prev) / dt + u_new * np.gradient(b2_next, dx) + 2.0 * b2_next * ux_new

    return float(np.sqrt(np.sum(p_res ** 2) * dx)), float(np.sqrt(np.sum(b_res ** 2) * dx))


def records_to_columns(records: Sequence[InvariantRecord]) -> Dict[str, List[float]]:
    columns: Dict[str, List[float]] = {name: [] for name in InvariantRecord.__dataclass_fields__}
    for record in records:
        for name, value in record.as_dict().items():
            columns[name].append(value)
    return columns

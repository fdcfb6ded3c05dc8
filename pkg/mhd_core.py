#!/usr/bin/env python3
"""
Core types for the 1D compressible isentropic viscous MHD laboratory.
Grid construction, the gamma-law pressure, discrete norms and the
staggered-grid interpolation helpers shared by every other module.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Below this density the run is treated as having produced vacuum.
RHO_ABORT = 1e-8


class MHDError(Exception):
    """Base class for every error raised by the laboratory"""


class ConfigError(MHDError, ValueError):
    """Invalid parameters or configuration files"""


class DomainError(MHDError, ValueError):
    """Argument outside the domain of an operation"""


class UsageError(MHDError, ValueError):
    """Operation called in the wrong regime or with mismatched shapes"""


class InsufficientDataError(UsageError):
    """Not enough points for a fit"""


class SolverError(MHDError, RuntimeError):
    """Numerical failure during time integration"""

    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class VacuumError(SolverError):
    def __init__(self, cell: int, time: float, value: float):
        super().__init__(f"vacuum: rho={value:.3e} in cell {cell} at t={time:.6g}", time)
        self.cell = cell
        self.value = value

    def __reduce__(self):
        return VacuumError, (self.cell, self.time, self.value)


class DivergenceError(SolverError):
    pass


@dataclass
class CheckResult:
    """Outcome of one acceptance or consistency check"""
    name: str
    passed: bool
    value: Optional[float] = None
    detail: str = ""

    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


@dataclass(frozen=True)
class FluidParams:
    """Physical constants of the gamma-law fluid"""
    A: float = 1.0
    gamma: float = 1.4
    lam: float = 1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ConfigError(f"pressure coefficient A must be > 0 (got {self.A})")
        if not self.gamma > 1:
            raise ConfigError(f"adiabatic exponent gamma must be > 1 (got {self.gamma})")
        if not self.lam > 0:
            raise ConfigError(f"viscosity lambda must be > 0 (got {self.lam})")


@dataclass(frozen=True)
class Grid:
    """Uniform staggered mesh on (0,1): rho and b at centers, u at faces"""
    n_cells: int
    dx: float = field(init=False)
    cell_centers: np.ndarray = field(init=False, repr=False, compare=False)
    faces: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ConfigError(f"grid needs an integer number of cells >= 2 (got {self.n_cells})")
        n = int(self.n_cells)
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "dx", 1.0 / n)
        faces = np.arange(n + 1, dtype=float) / n
        faces[-1] = 1.0
        centers = (np.arange(n, dtype=float) + 0.5) / n
        faces.setflags(write=False)
        centers.setflags(write=False)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "cell_centers", centers)

    @property
    def interior_faces(self) -> np.ndarray:
        return self.faces[1:-1]

    def positions(self, field_values: np.ndarray) -> np.ndarray:
        """Sample positions matching a cell or face array"""
        return self.faces if _layout(field_values, self) == "face" else self.cell_centers


@dataclass
class State:
    """Discrete fields plus the simulation clock"""
    rho: np.ndarray
    u: np.ndarray
    b: np.ndarray
    time: float = 0.0

    @property
    def n_cells(self) -> int:
        return len(self.rho)

    def copy(self) -> "State":
        return State(self.rho.copy(), self.u.copy(), self.b.copy(), self.time)

    def validate(self):
        """Check the state invariants; raise the matching solver error"""
        n = len(self.rho)
        if len(self.b) != n or len(self.u) != n + 1:
            raise UsageError(f"state shapes rho={len(self.rho)}, u={len(self.u)}, b={len(self.b)} are inconsistent")
        for name in ("rho", "u", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DivergenceError(f"non-finite values in {name} at t={self.time:.6g}", self.time)
        low = int(np.argmin(self.rho))
        if self.rho[low] <= RHO_ABORT:
            raise VacuumError(low, self.time, float(self.rho[low]))
        if self.u[0] != 0.0 or self.u[-1] != 0.0:
            raise UsageError("velocity must vanish on the wall faces")


@dataclass(frozen=True)
class BoundaryMagnetic:
    """Magnetic boundary signal b(0,t)=b1(t), b(1,t)=b2(t)"""
    kind: str = "none"
    c1: float = 0.0
    c2: float = 0.0
    a1: float = 0.0
    omega1: float = 0.0
    a2: float = 0.0
    omega2: float = 0.0
    t_rise: float = 0.05

    KINDS = ("none", "constant", "sinusoid", "ramp")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown boundary kind '{self.kind}' (expected one of {', '.join(self.KINDS)})")
        if self.kind == "ramp" and not self.t_rise > 0:
            raise ConfigError(f"ramp rise time must be > 0 (got {self.t_rise})")

    @classmethod
    def none(cls) -> "BoundaryMagnetic":
        return cls("none")

    @classmethod
    def constant(cls, c1: float, c2: float) -> "BoundaryMagnetic":
        return cls("constant", c1=float(c1), c2=float(c2))

    @classmethod
    def sinusoid(cls, a1: float, omega1: float, a2: float, omega2: float) -> "BoundaryMagnetic":
        return cls("sinusoid", a1=float(a1), omega1=float(omega1), a2=float(a2), omega2=float(omega2))

    @classmethod
    def ramp(cls, c1: float, c2: float, t_rise: float = 0.05) -> "BoundaryMagnetic":
        return cls("ramp", c1=float(c1), c2=float(c2), t_rise=float(t_rise))

    def values(self, t: float) -> Tuple[float, float]:
        if self.kind == "none":
            return 0.0, 0.0
        if self.kind == "constant":
            return self.c1, self.c2
        if self.kind == "sinusoid":
            return self.a1 * math.sin(self.omega1 * t), self.a2 * math.sin(self.omega2 * t)
        # C1 smoothstep, starts from zero to stay compatible with b0 = 0
        tau = min(max(t / self.t_rise, 0.0), 1.0)
        s = tau * tau * (3.0 - 2.0 * tau)
        return self.c1 * s, self.c2 * s

    def amplitude(self, t: float) -> float:
        b1, b2 = self.values(t)
        return max(abs(b1), abs(b2))

    def peak_amplitude(self) -> float:
        if self.kind == "sinusoid":
            return max(abs(self.a1), abs(self.a2))
        return max(abs(self.c1), abs(self.c2))

    @property
    def is_trivial(self) -> bool:
        return self.kind == "none" or self.peak_amplitude() == 0.0

    def describe(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "constant":
            return f"constant({self.c1:g}, {self.c2:g})"
        if self.kind == "sinusoid":
            return f"sinusoid({self.a1:g}, {self.omega1:g}, {self.a2:g}, {self.omega2:g})"
        return f"ramp({self.c1:g}, {self.c2:g}, {self.t_rise:g})"


@dataclass(frozen=True)
class InitialData:
    """Initial data preset: constant(rho_bar) or smooth(...)"""
    preset: str = "constant"
    rho_bar: float = 1.0
    rho_amp: float = 0.0
    u_amp: float = 0.0
    b_amp: float = 0.0
    b_mean: float = 0.0

    def __post_init__(self):
        if self.preset not in ("constant", "smooth"):
            raise ConfigError(f"unknown initial preset '{self.preset}' (expected constant or smooth)")
        if not self.rho_bar - abs(self.rho_amp) > 0:
            raise ConfigError("initial density must stay positive: rho_bar > |rho_amp| required")

    @classmethod
    def constant(cls, rho_bar: float) -> "InitialData":
        return cls("constant", rho_bar=float(rho_bar))

    @classmethod
    def smooth(cls, rho_bar: float, rho_amp: float, u_amp: float, b_amp: float, b_mean: float = 0.0) -> "InitialData":
        return cls("smooth", float(rho_bar), float(rho_amp), float(u_amp), float(b_amp), float(b_mean))

    def build(self, grid: Grid) -> State:
        x = grid.cell_centers
        n = grid.n_cells
        if self.preset == "constant":
            return State(np.full(n, self.rho_bar), np.zeros(n + 1), np.zeros(n), 0.0)
        rho = self.rho_bar + self.rho_amp * np.sin(2.0 * np.pi * x)
        u = self.u_amp * np.sin(np.pi * grid.faces)
        u[0] = 0.0
        u[-1] = 0.0
        b = self.b_mean + self.b_amp * np.sin(np.pi * x)
        return State(rho, u, b, 0.0)

    def describe(self) -> str:
        if self.preset == "constant":
            return f"constant({self.rho_bar:g})"
        return f"smooth({self.rho_bar:g}, {self.rho_amp:g}, {self.u_amp:g}, {self.b_amp:g}, {self.b_mean:g})"


@dataclass(frozen=True)
class ScenarioConfig:
    """One run of either the resistive (nu>0) or non-resistive (nu=0) system"""
    params: FluidParams = FluidParams()
    nu: float = 0.0
    grid_n: int = 256
    t_final: float = 0.1
    initial: InitialData = InitialData()
    boundary_b: BoundaryMagnetic = BoundaryMagnetic()
    cfl: float = 0.5
    snapshot_times: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.nu >= 0:
            raise ConfigError(f"resistivity nu must be >= 0 (got {self.nu})")
        if self.nu == 0 and self.boundary_b.kind != "none":
            raise ConfigError("nu=0 requires boundary kind none (the non-resistive system takes no magnetic boundary data)")
        if self.nu > 0 and self.boundary_b.kind == "none":
            raise ConfigError("nu>0 requires a magnetic boundary signal (boundary kind none is only legal for nu=0)")
        if not self.t_final > 0:
            raise ConfigError(f"t_final must be > 0 (got {self.t_final})")
        if not 0 < self.cfl < 1:
            raise ConfigError(f"cfl must lie in (0,1) (got {self.cfl})")
        times = tuple(float(t) for t in self.snapshot_times) or (float(self.t_final),)
        if list(times) != sorted(times):
            raise ConfigError("snapshot_times must be sorted")
        if times[0] < 0 or times[-1] > self.t_final:
            raise ConfigError(f"snapshot_times must lie in [0, {self.t_final}]")
        object.__setattr__(self, "snapshot_times", times)
        Grid(self.grid_n)

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_n)

    @property
    def resistive(self) -> bool:
        return self.nu > 0

    def with_resistivity(self, nu: float, boundary_b: Optional[BoundaryMagnetic] = None) -> "ScenarioConfig":
        """Same scenario with another nu (nu=0 drops the boundary signal)"""
        if nu == 0:
            return replace(self, nu=0.0, boundary_b=BoundaryMagnetic.none())
        return replace(self, nu=float(nu), boundary_b=boundary_b or self.boundary_b)

    def describe(self) -> str:
        system = "resistive" if self.resistive else "non-resistive"
        return (f"{system} nu={self.nu:g} n={self.grid_n} T={self.t_final:g} cfl={self.cfl:g} "
                f"A={self.params.A:g} gamma={self.params.gamma:g} lambda={self.params.lam:g} "
                f"initial={self.initial.describe()} boundary={self.boundary_b.describe()}")


def _layout(field_values: np.ndarray, grid: Grid) -> str:
    n = len(field_values)
    if n == grid.n_cells:
        return "cell"
    if n == grid.n_cells + 1:
        return "face"
    raise UsageError(f"array of length {n} matches neither {grid.n_cells} cells nor {grid.n_cells + 1} faces")


def _quadrature_weights(field_values: np.ndarray, grid: Grid) -> np.ndarray:
    # midpoint rule on cells; on faces the dual cells at the walls are half as wide
    if _layout(field_values, grid) == "cell":
        return np.full(grid.n_cells, grid.dx)
    w = np.full(grid.n_cells + 1, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    return w


def pressure(rho, params: FluidParams):
    """Gamma-law pressure P = A*rho**gamma"""
    arr = np.asarray(rho, dtype=float)
    if np.any(arr < 0):
        raise DomainError("pressure is undefined for negative density")
    p = params.A * np.power(arr, params.gamma)
    return float(p) if np.ndim(rho) == 0 else p


def sound_speed(rho: np.ndarray, params: FluidParams) -> np.ndarray:
    return np.sqrt(params.gamma * params.A * np.power(rho, params.gamma - 1.0))


def l2_norm(field_values: np.ndarray, grid: Grid) -> float:
    f = np.asarray(field_values, dtype=float)
    w = _quadrature_weights(f, grid)
    return float(np.sqrt(np.sum(w * f * f)))


def linf_norm(field_values: np.ndarray, grid: Grid) -> float:
    f = np.asarray(field_values, dtype=float)
    _layout(f, grid)
    return float(np.max(np.abs(f))) if len(f) else 0.0


def interior_linf(field_values: np.ndarray, grid: Grid, delta: float) -> float:
    """Max of |f| over sample points with delta < x < 1-delta"""
    if not 0 <= delta < 0.5:
        raise DomainError(f"layer margin delta must lie in [0, 1/2) (got {delta})")
    f = np.asarray(field_values, dtype=float)
    x = grid.positions(f)
    mask = (x > delta) & (x < 1.0 - delta)
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(f[mask])))


def xi_weight(x: np.ndarray) -> np.ndarray:
    return x * x * (1.0 - x) * (1.0 - x)


def weighted_h1_integral(rho: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Sum of xi(x_f)*(rho_x**2 + b_x**2)*dx over interior faces"""
    if len(rho) != grid.n_cells or len(b) != grid.n_cells:
        raise UsageError("weighted_h1_integral expects cell-centred rho and b")
    rho_x = np.diff(rho) / grid.dx
    b_x = np.diff(b) / grid.dx
    return float(np.sum(xi_weight(grid.interior_faces) * (rho_x ** 2 + b_x ** 2)) * grid.dx)


def interpolate_center_to_face(field_values: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(field_values, dtype=float)
    if len(f) != grid.n_cells:
        raise UsageError(f"expected {grid.n_cells} cell values, got {len(f)}")
    out = np.empty(grid.n_cells + 1)
    out[1:-1] = 0.5 * (f[:-1] + f[1:])
    out[0] = f[0]
    out[-1] = f[-1]
    return out


def interpolate_face_to_center(field_values: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(field_values, dtype=float)
    if len(f) != grid.n_cells + 1:
        raise UsageError(f"expected {grid.n_cells + 1} face values, got {len(f)}")
    return 0.5 * (f[:-1] + f[1:])


def restrict_to_coarse(state: State, factor: int) -> State:
    """Cell-average rho and b onto a grid `factor` times coarser; inject u on shared faces"""
    n = state.n_cells
    if factor < 1 or n % factor:
        raise UsageError(f"cannot coarsen {n} cells by a factor of {factor}")
    rho = state.rho.reshape(-1, factor).mean(axis=1)
    b = state.b.reshape(-1, factor).mean(axis=1)
    u = state.u[::factor].copy()
    return State(rho, u, b, state.time)


def state_difference_norms(a: State, b: State, grid: Grid) -> Tuple[float, float, float]:
    """L2 norms of rho, u and b differences between two states on the same grid"""
    return (l2_norm(a.rho - b.rho, grid), l2_norm(a.u - b.u, grid), l2_norm(a.b - b.b, grid))


def uniform_times(t_final: float, count: int) -> Tuple[float, ...]:
    """count+1 uniform times from 0 to t_final inclusive"""
    if count < 1:
        raise ConfigError("need at least one comparison interval")
    times = [t_final * k / count for k in range(count + 1)]
    times[-1] = float(t_final)
    return tuple(times)


def sorted_descending(values: Sequence[float]) -> Tuple[float, ...]:
    return tuple(sorted((float(v) for v in values), reverse=True))

"""MLS-MPM core: constitutive model, grid state, and the per-step transfers.

The background lattice uses quadratic B-spline weights over a 3x3x3 stencil.
Elastic (sensor) particles carry a fixed-corotated stress; rigid object
particles contribute mass and obstacle flags only and never move unless
scripted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import SimulationError
from .geometry import ParticleCloud, ROLE_SENSOR

MASS_EPSILON = 1e-10
SV_CLAMP = (0.05, 20.0)  # inversion-guard bounds on singular values of F
DEFAULT_DENSITY = 1.0


@dataclass(frozen=True)
class MaterialParams:
    """Young's modulus / Poisson ratio with derived Lame parameters."""

    E: float
    v: float
    mu: float = field(init=False)
    lam: float = field(init=False)

    def __post_init__(self):
        mu, lam = lame_params(self.E, self.v)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)


def lame_params(E: float, v: float) -> tuple[float, float]:
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0.0 < v < 0.5:
        raise ValueError(f"Poisson ratio out of range (0, 0.5): {v}")
    mu = E / (2.0 * (1.0 + v))
    lam = E * v / ((1.0 + v) * (1.0 - 2.0 * v))
    return mu, lam


def polar_decompose(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """F = R @ S with R a proper rotation and S symmetric positive-definite.

    SVD-based, with a sign flip on the smallest singular pair whenever
    det(U V^T) < 0.
    """
    F = np.asarray(F, dtype=np.float64).reshape(3, 3)
    U, s, Vt = np.linalg.svd(F)
    if np.linalg.det(U @ Vt) < 0.0:
        U[:, -1] *= -1.0
        s[-1] *= -1.0
    if s[-1] < 1e-12:
        raise ValueError("deformation gradient is (near-)singular")
    R = U @ Vt
    S = Vt.T @ np.diag(s) @ Vt
    return R, S


def strain_energy(F: np.ndarray, mat: MaterialParams) -> float:
    """Fixed-corotated energy density: mu sum (sigma_i - 1)^2 + lam/2 (J-1)^2."""
    F = np.asarray(F, dtype=np.float64).reshape(3, 3)
    s = np.linalg.svd(F, compute_uv=False)
    J = np.linalg.det(F)
    return float(mat.mu * np.sum((s - 1.0) ** 2) + 0.5 * mat.lam * (J - 1.0) ** 2)


def pk1_stress(F: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """First Piola-Kirchhoff stress: 2 mu (F - R) + lam (J-1) J F^-T."""
    F = np.asarray(F, dtype=np.float64).reshape(3, 3)
    R, _ = polar_decompose(F)
    J = np.linalg.det(F)
    return 2.0 * mat.mu * (F - R) + mat.lam * (J - 1.0) * J * np.linalg.inv(F).T


@dataclass
class GridState:
    """Uniform background lattice; flat node arrays in x-major order."""

    resolution: tuple[int, int, int]
    dx: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        nx, ny, nz = self.resolution
        if min(nx, ny, nz) < 8:
            raise ValueError("grid needs at least 8 nodes per axis")
        if self.dx <= 0:
            raise ValueError("grid spacing must be positive")
        n = nx * ny * nz
        self.node_mass = np.zeros(n)
        self.node_momentum = np.zeros((n, 3))
        self.node_velocity = np.zeros((n, 3))
        self.obstacle_flag = np.zeros(n, dtype=np.bool_)
        self._static_mass = np.zeros(n)

    @property
    def node_count(self) -> int:
        return self.node_mass.shape[0]

    def node_positions(self, flat_indices) -> np.ndarray:
        nx, ny, nz = self.resolution
        flat = np.asarray(flat_indices)
        i = flat // (ny * nz)
        j = (flat // nz) % ny
        k = flat % nz
        return np.stack([i, j, k], axis=-1) * self.dx + self.origin

    def safe_bounds(self, margin_cells: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
        res = np.array(self.resolution)
        lo = self.origin + margin_cells * self.dx
        hi = self.origin + (res - 1 - margin_cells) * self.dx
        return lo, hi

    def set_static_object(self, cloud: ParticleCloud, density: float = DEFAULT_DENSITY):
        """Pre-scatter a static rigid cloud: mass plus obstacle flags.

        Obstacle flags mark only nodes inside the occupied volume (within one
        covering radius of a particle), not the whole scatter stencil, so the
        sticky boundary does not balloon past the object surface.
        """
        from scipy.spatial import cKDTree

        self._static_mass[:] = 0.0
        self.obstacle_flag[:] = False
        check_in_bounds(cloud.positions, self)
        mass = np.full(len(cloud), density * cloud.spacing ** 3)
        nx, ny, nz = self.resolution
        _kernels.scatter_mass(
            cloud.positions, mass, self._static_mass,
            nx, ny, nz, self.dx, self.origin)
        all_nodes = self.node_positions(np.arange(self.node_count))
        covering = 0.5 * np.sqrt(3.0) * cloud.spacing
        dist, _ = cKDTree(cloud.positions).query(all_nodes, k=1,
                                                 distance_upper_bound=covering * 1.001)
        self.obstacle_flag[:] = np.isfinite(dist)
        self.clear()

    def clear(self):
        """Reset accumulators to the static-object baseline."""
        self.node_mass[:] = self._static_mass
        self.node_momentum[:] = 0.0
        self.node_velocity[:] = 0.0


@dataclass
class StepParams:
    """Timestep plus the constants derived from it."""

    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def cfl_limit(mat: MaterialParams, dx: float, density: float = DEFAULT_DENSITY) -> float:
    """Largest stable dt: 0.5 dx / c with c the p-wave speed."""
    c = np.sqrt((mat.lam + 2.0 * mat.mu) / density)
    return 0.5 * dx / c


def check_in_bounds(positions: np.ndarray, grid: GridState, what: str = "particle"):
    lo, hi = grid.safe_bounds()
    if np.any(positions < lo) or np.any(positions > hi):
        raise SimulationError(
            f"{what} positions outside the safe grid interior "
            f"[{lo.tolist()} .. {hi.tolist()}]")


def bspline_weights(xp, grid: GridState) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic B-spline stencil of one position: (27, 3) node indices and
    the 27 tensor-product weights (sum to 1)."""
    xp = np.asarray(xp, dtype=np.float64).reshape(3)
    check_in_bounds(xp[None, :], grid)
    g = (xp - grid.origin) / grid.dx
    base = np.floor(g - 0.5).astype(np.int64)
    f = g - base
    w = np.stack([0.5 * (1.5 - f) ** 2, 0.75 - (f - 1.0) ** 2, 0.5 * (f - 0.5) ** 2])
    offs = np.stack(np.meshgrid([0, 1, 2], [0, 1, 2], [0, 1, 2], indexing="ij"),
                    axis=-1).reshape(27, 3)
    weights = w[offs[:, 0], 0] * w[offs[:, 1], 1] * w[offs[:, 2], 2]
    return base + offs, weights


class ParticleState:
    """Struct-of-arrays particle storage; elastic sensor particles first."""

    def __init__(self, sensor: ParticleCloud, object_cloud: ParticleCloud | None = None,
                 alpha: np.ndarray | None = None, density: float = DEFAULT_DENSITY):
        if sensor.role != ROLE_SENSOR:
            raise ValueError("first cloud must have the sensor role")
        ns = len(sensor)
        self.n_sensor = ns
        self.x = sensor.positions.copy()
        self.v = np.zeros((ns, 3))
        self.F = np.tile(np.eye(3), (ns, 1, 1))
        self.C = np.zeros((ns, 3, 3))
        self.m = np.full(ns, density * sensor.spacing ** 3)
        self.V0 = np.full(ns, sensor.spacing ** 3)
        self.elastic = np.ones(ns, dtype=np.bool_)
        self.alpha = np.ones(ns) if alpha is None else np.asarray(alpha, dtype=np.float64).copy()
        if self.alpha.shape != (ns,):
            raise ValueError("alpha field length must match the sensor particle count")
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise ValueError("alpha values must lie in [0, 1]")
        self.lattice_index = None if sensor.lattice_index is None else sensor.lattice_index.copy()
        self.rest_x = self.x.copy()
        self.object_cloud = object_cloud

    @property
    def sensor_x(self) -> np.ndarray:
        return self.x[:self.n_sensor]


def p2g_scatter(state: ParticleState, grid: GridState, step: StepParams,
                mat: MaterialParams):
    """Accumulate mass and momentum of the dynamic particles onto the grid."""
    check_in_bounds(state.x, grid)
    nx, ny, nz = grid.resolution
    _kernels.p2g(state.x, state.v, state.F, state.C, state.m, state.V0,
                 state.elastic, grid.node_mass, grid.node_momentum,
                 nx, ny, nz, grid.dx, grid.origin, step.dt, mat.mu, mat.lam)


def grid_update(grid: GridState):
    """Momentum -> velocity normalization with the mass and obstacle guards."""
    nx, ny, nz = grid.resolution
    _kernels.grid_normalize(grid.node_mass, grid.node_momentum,
                            grid.node_velocity, grid.obstacle_flag, MASS_EPSILON)


def g2p_gather(state: ParticleState, grid: GridState, v_r, step: StepParams,
               literal_affine: bool = False):
    """Blend grid and hand velocities, advect, and update C and F."""
    v_r = np.asarray(v_r, dtype=np.float64).reshape(3)
    nx, ny, nz = grid.resolution
    _kernels.g2p(state.x, state.v, state.F, state.C, state.alpha,
                 grid.node_velocity, nx, ny, nz, grid.dx, grid.origin,
                 step.dt, v_r, SV_CLAMP[0], SV_CLAMP[1], literal_affine)
    check_in_bounds(state.x, grid, what="advected particle")


def simulation_step(state: ParticleState, grid: GridState, step: StepParams,
                    mat: MaterialParams, v_r, literal_affine: bool = False):
    """One full transfer cycle: clear -> scatter -> normalize -> gather."""
    grid.clear()
    p2g_scatter(state, grid, step, mat)
    grid_update(grid)
    g2p_gather(state, grid, v_r, step, literal_affine=literal_affine)

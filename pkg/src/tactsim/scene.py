"""Press experiments: scenario description, alpha ramp, chamfer terminal
check, and the outer simulation loop."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, SimulationError
from .geometry import (ParticleCloud, RigidTransform, SensorLayout, TriangleMesh,
                       load_mesh, make_sensor_slab, voxelize)
from .solver import (DEFAULT_DENSITY, GridState, MaterialParams, ParticleState,
                     StepParams, cfl_limit, simulation_step)

TERMINATED_THRESHOLD = "threshold"
TERMINATED_MAX_STEPS = "max_steps"


@dataclass
class PressScenario:
    """Complete description of one press experiment.

    The hand velocity is press_speed * press_direction, so it is parallel to
    the press direction by construction.  sensor_center is the world position
    of the contact-layer center; None selects automatic standoff placement
    against the object (or the domain center when there is no object).
    """

    object_mesh: str | None = None
    object_spacing: float = 1.0 / 64.0
    sensor_H: int = 32
    sensor_W: int = 32
    sensor_L: int = 4
    sensor_spacing: float = 1.0 / 128.0
    sensor_center: tuple | None = None
    E: float = 3.0
    v: float = 0.25
    grid_resolution: int = 64
    domain: float = 1.0
    dt: float = 2.0e-4
    press_direction: tuple = (0.0, 0.0, -1.0)
    press_speed: float = 0.1
    standoff: float | None = None
    terminal_threshold: float = 5.0e-5
    max_steps: int = 4000
    record_every: int = 20
    settle_steps: int = 0
    density: float = DEFAULT_DENSITY
    deterministic: bool = True
    literal_affine: bool = False

    @property
    def material(self) -> MaterialParams:
        return MaterialParams(self.E, self.v)

    @property
    def grid_dx(self) -> float:
        return self.domain / self.grid_resolution

    @property
    def v_r(self) -> np.ndarray:
        return self.press_speed * np.asarray(self.press_direction, dtype=np.float64)

    def validate(self):
        try:
            mat = self.material
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        d = np.asarray(self.press_direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ConfigError(f"press direction must be a unit vector, got {d.tolist()}")
        if self.terminal_threshold < 0:
            raise ConfigError("terminal threshold must be non-negative")
        if self.max_steps <= 0 or self.record_every <= 0:
            raise ConfigError("max_steps and record_every must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        limit = cfl_limit(mat, self.grid_dx, self.density)
        if self.dt > limit:
            raise ConfigError(
                f"dt={self.dt:g} violates the CFL bound dt <= 0.5*dx/c = {limit:.4g}")
        if self.sensor_L < 2:
            raise ConfigError("sensor needs at least 2 layers")
        if self.object_mesh is None and self.sensor_center is None and self.standoff is not None:
            raise ConfigError("standoff placement requires an object mesh")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sensor_center"] is not None:
            d["sensor_center"] = list(d["sensor_center"])
        d["press_direction"] = list(d["press_direction"])
        return d

    _FLOAT_FIELDS = ("object_spacing", "sensor_spacing", "E", "v", "domain", "dt",
                     "press_speed", "standoff", "terminal_threshold", "density")
    _INT_FIELDS = ("sensor_H", "sensor_W", "sensor_L", "grid_resolution",
                   "max_steps", "record_every", "settle_steps")

    @classmethod
    def from_dict(cls, data: dict) -> "PressScenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        try:
            for f in cls._FLOAT_FIELDS:
                if data.get(f) is not None:
                    data[f] = float(data[f])
            for f in cls._INT_FIELDS:
                if data.get(f) is not None:
                    data[f] = int(data[f])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario value: {exc}") from exc
        sc = cls(**data)
        if sc.sensor_center is not None:
            sc.sensor_center = tuple(float(c) for c in sc.sensor_center)
        sc.press_direction = tuple(float(c) for c in sc.press_direction)
        return sc

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PressResult:
    frames: list
    chamfer_series: list
    terminated_by: str
    steps_run: int
    state: ParticleState = None
    layout: SensorLayout = None
    scenario: PressScenario = None


def alpha_field(layout: SensorLayout) -> np.ndarray:
    """Linear ramp over layers: 0 at the mounting layer, 1 at the contact
    layer, flattened in slab particle order."""
    ramp = (layout.L - 1 - np.arange(layout.L)) / (layout.L - 1)
    return np.repeat(ramp, layout.H * layout.W)


def chamfer_translation_free(current: np.ndarray, rest: np.ndarray) -> float:
    """Bidirectional sum of squared nearest-neighbor distances after
    mean-centering both point sets."""
    cur = np.asarray(current, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(rest, dtype=np.float64).reshape(-1, 3)
    if len(cur) == 0 or len(ref) == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    cur = cur - cur.mean(axis=0)
    ref = ref - ref.mean(axis=0)
    d_cur, _ = cKDTree(ref).query(cur, k=1)
    d_ref, _ = cKDTree(cur).query(ref, k=1)
    return float(np.sum(d_cur ** 2) + np.sum(d_ref ** 2))


def terminal_check(l: float, scenario: PressScenario) -> bool:
    return l >= scenario.terminal_threshold


def press_rotation(direction) -> np.ndarray:
    """Rotation whose local layer axis (+z) points opposite the press
    direction, so the contact layer leads the motion."""
    n = -np.asarray(direction, dtype=np.float64)
    n = n / np.linalg.norm(n)
    a = np.zeros(3)
    a[np.argmin(np.abs(n))] = 1.0
    t1 = a - np.dot(a, n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.stack([t1, t2, n], axis=1)


def ray_surface_exit(mesh: TriangleMesh, origin, direction) -> np.ndarray:
    """Farthest intersection of a ray with the mesh (Moller-Trumbore)."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    tri = mesh.vertices[mesh.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - tri[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", np.broadcast_to(d, e1.shape), q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) & (t > 0)
    if not hit.any():
        raise SimulationError("placement ray missed the object mesh")
    return o + t[hit].max() * d


@dataclass
class PressSetup:
    state: ParticleState
    grid: GridState
    layout: SensorLayout
    material: MaterialParams
    step: StepParams
    scenario: PressScenario
    sensor_pose: RigidTransform


def build_press(scenario: PressScenario,
                object_cloud: ParticleCloud | None = None) -> PressSetup:
    """Instantiate grid, object particles, and the posed sensor slab."""
    scenario.validate()
    sc = scenario
    mesh = None
    if sc.object_mesh is not None:
        mesh = load_mesh(sc.object_mesh)
        if object_cloud is None:
            object_cloud = voxelize(mesh, sc.object_spacing)

    d = np.asarray(sc.press_direction, dtype=np.float64)
    R = press_rotation(d)
    if sc.sensor_center is not None:
        c0 = np.asarray(sc.sensor_center, dtype=np.float64)
    elif mesh is not None:
        standoff = 2.0 * sc.object_spacing if sc.standoff is None else sc.standoff
        centroid = mesh.vertices.mean(axis=0)
        surface = ray_surface_exit(mesh, centroid, -d)
        c0 = surface + standoff * (-d)
    else:
        c0 = np.full(3, sc.domain / 2.0)
    # contact-layer (layer 0) lattice center sits at c0
    local_c0 = np.array([(sc.sensor_H - 1) / 2.0, (sc.sensor_W - 1) / 2.0, 0.0])
    pose = RigidTransform(R, c0 - R @ (local_c0 * sc.sensor_spacing))

    sensor, layout = make_sensor_slab(sc.sensor_H, sc.sensor_W, sc.sensor_L,
                                      sc.sensor_spacing, pose)
    state = ParticleState(sensor, object_cloud=object_cloud,
                          alpha=alpha_field(layout), density=sc.density)
    # start the slab already moving with the hand; a uniform velocity field
    # is a fixed point of the transfers, so the approach phase is exact
    # rigid translation instead of a ringing startup transient
    state.v[:] = sc.v_r

    res = sc.grid_resolution
    grid = GridState((res, res, res), sc.grid_dx)
    if object_cloud is not None:
        grid.set_static_object(object_cloud, density=sc.density)
    return PressSetup(state, grid, layout, sc.material, StepParams(sc.dt), sc, pose)


def run_press(scenario: PressScenario,
              object_cloud: ParticleCloud | None = None) -> PressResult:
    """Algorithm outer loop: press until the chamfer threshold fires or the
    step budget runs out, recording tactile frames along the way."""
    from . import tactile_io  # deferred: tactile_io imports this module

    setup = build_press(scenario, object_cloud=object_cloud)
    sc, state, grid, layout = scenario, setup.state, setup.grid, setup.layout
    contact = layout.layer_slice(0)
    rest_contact = state.rest_x[contact].copy()

    frames = []
    chamfer_series = []

    def record(step_idx, l):
        frames.append(tactile_io.extract_tactile_frame(
            state.x[:state.n_sensor], layout, state.rest_x, step_idx,
            press_direction=np.asarray(sc.press_direction, dtype=np.float64),
            chamfer=l))
        chamfer_series.append(l)

    record(0, 0.0)
    v_r = sc.v_r
    terminated_by = TERMINATED_MAX_STEPS
    steps_run = 0
    settling = False
    settle_left = 0

    for n in range(1, sc.max_steps + 1):
        simulation_step(state, grid, setup.step, setup.material, v_r,
                        literal_affine=sc.literal_affine)
        steps_run = n
        if n % 25 == 0 and not np.all(np.isfinite(state.x)):
            raise SimulationError(f"non-finite particle positions at step {n}")
        l = chamfer_translation_free(state.x[contact], rest_contact)
        if not np.isfinite(l):
            raise SimulationError(f"non-finite chamfer distance at step {n}")
        if n % sc.record_every == 0:
            record(n, l)
        if not settling and terminal_check(l, sc):
            terminated_by = TERMINATED_THRESHOLD
            v_r = np.zeros(3)
            if n % sc.record_every != 0:
                record(n, l)
            settling = True
            settle_left = sc.settle_steps
            if settle_left == 0:
                break
        elif settling:
            settle_left -= 1
            if settle_left <= 0:
                break

    if not np.all(np.isfinite(state.x)):
        raise SimulationError("non-finite particle positions at end of press")
    if terminated_by == TERMINATED_MAX_STEPS and steps_run % sc.record_every != 0:
        record(steps_run, chamfer_translation_free(state.x[contact], rest_contact))
    return PressResult(frames, chamfer_series, terminated_by, steps_run,
                       state=state, layout=layout, scenario=scenario)

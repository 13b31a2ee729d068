"""Particle-based elastic tactile sensor simulator."""

from .errors import (ConfigError, FrameFormatError, MeshError, SimulationError,
                     TactSimError, VoxelizationError)
from .geometry import (ParticleCloud, RigidTransform, SensorLayout, TriangleMesh,
                       load_mesh, make_sensor_slab, make_uv_sphere, save_mesh,
                       voxelize)
from .scene import (PressResult, PressScenario, alpha_field,
                    chamfer_translation_free, run_press, terminal_check)
from .solver import (GridState, MaterialParams, ParticleState, StepParams,
                     bspline_weights, cfl_limit, g2p_gather, grid_update,
                     lame_params, p2g_scatter, pk1_stress, polar_decompose,
                     simulation_step, strain_energy)
from .tactile_io import (DatasetManifest, TactileFrame, export_frame,
                         extract_tactile_frame, fibonacci_sphere,
                         generate_dataset, read_frame)

__version__ = "0.1.0"

"""Exception hierarchy shared across the package."""


class TactSimError(Exception):
    """Base class for all simulator errors."""


class MeshError(TactSimError):
    """Mesh file could not be read or is structurally invalid."""


class VoxelizationError(TactSimError):
    """Interior sampling failed (empty interior, non-watertight mesh, ...)."""


class ConfigError(TactSimError):
    """Scenario configuration is missing, malformed, or out of range."""


class SimulationError(TactSimError):
    """Runtime failure inside the time-stepping loop (NaN, escaped particle)."""


class FrameFormatError(TactSimError):
    """Tactile frame file is truncated or has a bad header."""

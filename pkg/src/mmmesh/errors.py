"""Exception types shared across the package."""


class MeshError(Exception):
    """Base class for all package-specific errors."""


class TopologyError(MeshError):
    """Malformed or inconsistent topology description."""


class RadioDomainError(MeshError):
    """Physical-layer argument outside its valid domain."""


class SimulationError(MeshError):
    """Episode state violated an invariant or got an invalid input."""


class ConfigError(MeshError):
    """Run configuration file failed validation."""


class TrainingError(MeshError):
    """Optimization produced non-finite values or an invalid setup."""


class CheckpointError(MeshError):
    """Checkpoint file is missing, truncated, or incompatible."""

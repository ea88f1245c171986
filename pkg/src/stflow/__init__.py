"""Two-phase slightly compressible flow on adaptive space-time meshes."""

from .errors import (
    StflowError,
    ConfigError,
    MeshError,
    SolverError,
    NewtonError,
    LinearSolveError,
    SingularMatrixError,
    LinearStagnationError,
)

__version__ = "0.1.0"

__all__ = [
    "StflowError",
    "ConfigError",
    "MeshError",
    "SolverError",
    "NewtonError",
    "LinearSolveError",
    "SingularMatrixError",
    "LinearStagnationError",
    "__version__",
]

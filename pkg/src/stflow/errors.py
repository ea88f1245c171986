"""Exception hierarchy shared across the package."""

from __future__ import annotations


class StflowError(Exception):
    """Base class for all package errors."""


class ConfigError(StflowError):
    """Invalid configuration file or parameter set."""


class MeshError(StflowError):
    """Illegal mesh operation (refining past a cap, mixing coarse steps, ...)."""


class SolverError(StflowError):
    """Base class for nonlinear/linear solve failures."""


class NewtonError(SolverError):
    """Newton iteration failed to converge within the iteration budget."""

    def __init__(self, message: str, residual_history: list[float] | None = None):
        super().__init__(message)
        self.residual_history = residual_history or []


class LinearSolveError(SolverError):
    """Base class for linear backend failures."""


class SingularMatrixError(LinearSolveError):
    """Direct factorization hit an exactly singular matrix."""


class LinearStagnationError(LinearSolveError):
    """Iterative solver stagnated or exhausted its iteration budget."""

"""Exception types raised across the package."""

from __future__ import annotations


class DroneRaceError(Exception):
    """Base class for all package errors."""


class NoProjectionFound(DroneRaceError):
    """Newton refinement failed from every candidate bracket."""


class SingularProjection(DroneRaceError):
    """The projection-rate denominator fell below the singularity guard."""

    def __init__(self, message: str, theta: float | None = None, margin: float | None = None):
        super().__init__(message)
        self.theta = theta
        self.margin = margin


class KrylovBreakdown(RuntimeWarning):
    """GMRES did not reduce the linear residual; the last iterate was used."""


class NonFiniteResidual(DroneRaceError):
    """The optimality residual became NaN or infinite."""


class InitializationFailed(DroneRaceError):
    """Newton initialization never brought the residual below 1e-2."""


class IncompleteRaces(DroneRaceError):
    """A race in the comparison set has no overtake within its duration."""


class SchemaMismatch(DroneRaceError, ValueError):
    """A race CSV header or column count disagrees with the fixed schema."""


class ParseError(SchemaMismatch):
    """A race CSV cell could not be parsed as a finite number."""

    def __init__(self, message: str, row: int, column: str):
        super().__init__(f"{message} (row {row}, column {column!r})")
        self.row = row
        self.column = column


class RaceAborted(DroneRaceError):
    """A race stopped early; carries the failure time and the partial log."""

    def __init__(self, message: str, time: float, log=None, cause: Exception | None = None):
        super().__init__(f"{message} at t={time:.3f} s")
        self.time = time
        self.log = log
        self.cause = cause


class ConfigError(DroneRaceError, ValueError):
    """A configuration file has an unknown key or an invalid value."""

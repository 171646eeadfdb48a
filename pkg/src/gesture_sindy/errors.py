"""Exception taxonomy for the toolkit.

Three branches map onto CLI exit codes: configuration/usage problems
(exit 2), malformed or degenerate input data (exit 3), and numerical
failures during fitting or integration (exit 4).
"""


class ToolkitError(Exception):
    """Base class for all toolkit-specific errors."""


class ConfigError(ToolkitError):
    """Invalid configuration value, unknown name, or missing input path."""


class DataError(ToolkitError):
    """Input data is malformed or unusable."""


class DataFormatError(DataError):
    """A file failed to parse; carries the path and 1-based line number."""

    def __init__(self, message, path=None, line=None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class DegenerateTrackError(DataError):
    """A pellet track has no spatial variance, so no principal axis exists."""


class NumericalError(ToolkitError):
    """Base class for failures of the numerical machinery."""


class InvalidStateError(NumericalError):
    """A state vector or parameter set contains NaN or infinity."""


class IntegrationError(NumericalError):
    """Integration stalled or blew up; ``last_time`` is the last valid time."""

    def __init__(self, message, last_time=None):
        if last_time is not None:
            message = f"{message} (last valid time t={last_time:.6g})"
        super().__init__(message)
        self.last_time = last_time


class IllConditionedError(NumericalError):
    """A linear system was singular or numerically unsolvable."""


class EmptyModelError(NumericalError):
    """Thresholding removed every term from an equation."""


class InfeasibleConstraintsError(NumericalError):
    """Equality constraints are mutually inconsistent."""

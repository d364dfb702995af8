"""Exception types raised across the package."""


class SynapseError(Exception):
    """Base class for every error raised by memsynapse."""


class CalibrationError(SynapseError):
    """A device calibration did not converge or missed its targets."""

    def __init__(self, message, residuals=None, spacing=None):
        super().__init__(message)
        self.residuals = residuals
        self.spacing = spacing


class SolverError(SynapseError):
    """The DC operating-point search failed to converge."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class SetError(SynapseError):
    """The SET fixed-point iteration did not settle."""


class InvalidStateError(SynapseError):
    """An operation was requested from an incompatible memristor state."""


class McError(SynapseError):
    """Too many Monte Carlo samples failed to converge."""


class IngestionError(SynapseError):
    """A dataset file could not be parsed."""

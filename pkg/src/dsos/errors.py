"""Exception hierarchy."""


class DsosError(Exception):
    """Base class for all errors raised by this package."""


class DataError(DsosError, ValueError):
    """Input data violates a structural requirement (empty side, NaN, ...)."""


class ConfigError(DsosError, ValueError):
    """Incompatible or invalid configuration."""


class CalibrationError(DsosError, RuntimeError):
    """A scorer failed to calibrate; carries the permutation index if any."""

    def __init__(self, message, permutation=None):
        self.permutation = permutation
        if permutation is not None:
            message = f"{message} (permutation {permutation})"
        super().__init__(message)

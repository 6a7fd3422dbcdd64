"""
Errors raised by the laboratory.

Every error carries a plain message; the command line prints it after an
``error:`` prefix.
"""


class LabError(Exception):
    """Base class of every laboratory error."""


class InvalidConfigError(LabError, ValueError):
    """A configuration or parameter value violates its invariants."""


class NegativeRateError(InvalidConfigError):
    """An injected violation would push a rate below zero."""


class OutOfRangeError(LabError, ValueError):
    """A detected rate has no finite, non-negative incident preimage."""


class SaturationError(OutOfRangeError):
    """A detected rate at or above 1/tau."""


class DegenerateNormalizationError(LabError, ArithmeticError):
    """delta is zero, so kappa is undefined."""


class TotalInternalReflectionError(LabError, ValueError):
    """Snell's law has no real refraction angle."""


class ResourceLimitError(LabError, RuntimeError):
    """A simulation would generate more events than the configured cap."""


class ConvergenceError(LabError, RuntimeError):
    """
    The calibration minimizer did not converge.

    ``diagnostics`` holds the optimizer status for the report.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DataFormatError(LabError, ValueError):
    """A CSV file is malformed; the message names the offending row."""


class IllConditionedWarning(UserWarning):
    """Calibration data span less than one decade of rates."""

"""Exception hierarchy.

Validation-type errors (bad input, bad configuration) map to CLI exit code 1;
everything else raised by the library maps to exit code 2.
"""


class BenchError(Exception):
    """Base class for all errors raised by dpflbench."""


class ValidationError(BenchError, ValueError):
    """Input violates a documented precondition."""


class ConfigError(ValidationError):
    """Configuration file or option is invalid."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(BenchError, ArithmeticError):
    """A computation produced or received non-finite values."""


class AccountingError(BenchError, RuntimeError):
    """The privacy accountant could not produce a bound."""


class CalibrationError(BenchError, RuntimeError):
    """No noise multiplier in the search bracket meets the target epsilon."""


class AggregationError(BenchError, RuntimeError):
    """Client updates cannot be combined."""


class ExperimentError(BenchError, RuntimeError):
    """A benchmark grid cell failed."""

"""Exception hierarchy shared by all modules."""


class FragrateError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(FragrateError, ValueError):
    """An argument lies outside the admissible range of an operation."""


class UnsupportedKernelError(DomainError):
    """The kernel shape is not supported by the requested operation."""


class GridMismatchError(FragrateError, ValueError):
    """Two objects were built on different grids."""


class NumericError(FragrateError, ArithmeticError):
    """A computation produced non-finite values or degenerate output."""


class NumericOverflowError(NumericError):
    """Time stepping blew up; usually the step is too large."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConvergenceError(NumericError):
    """An iteration stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateSpectrumError(NumericError):
    """The discrete spectrum does not separate a stationary mode."""


class WindowError(NumericError):
    """A fitting window contains too few or under-resolved samples."""


class SelectionError(NumericError):
    """No admissible splitting parameter could be found."""


class ConfigError(FragrateError, ValueError):
    """The run configuration is malformed or fails validation."""

"""Exception hierarchy shared by the simulator modules and the CLI."""


class IonWalkError(Exception):
    """Base class for every error raised by :mod:`ionwalk`."""

    exit_code = 1


class ConfigError(IonWalkError, ValueError):
    """Invalid configuration or parameter value."""

    exit_code = 2


class DomainError(IonWalkError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2


class NumericError(IonWalkError, ArithmeticError):
    """Non-finite input or output in a numerical kernel."""

    exit_code = 3


class TruncationError(NumericError):
    """Population leaked into the guard band at the top of the Fock space."""

    def __init__(self, message, guard_population=None):
        super().__init__(message)
        self.guard_population = guard_population


class CoverageError(NumericError):
    """A sampling grid does not cover the support of the state."""


class ConvergenceError(NumericError):
    """A time-stepping integrator did not converge at the requested step."""


class ResolvabilityError(NumericError):
    """A readout signal is too short to resolve the tones it contains."""

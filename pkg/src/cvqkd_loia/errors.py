"""Exception and warning types raised by the library."""


class CVQKDError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CVQKDError, ValueError):
    """An argument violates a documented precondition."""


class UnphysicalError(CVQKDError, ValueError):
    """Observables or a covariance matrix that no quantum state can produce."""


class InfeasibleScenarioError(CVQKDError):
    """The requested attack scenario has no consistent practical channel."""


class BracketError(CVQKDError):
    """A root search was asked to work on an interval that does not bracket a sign change."""


class NonMonotoneError(CVQKDError):
    """A function assumed monotone was found not to be on the diagnostic grid.

    The grid is kept on the exception for inspection.
    """

    def __init__(self, message, grid=None, values=None):
        super().__init__(message)
        self.grid = grid
        self.values = values


class InsufficientPowerError(CVQKDError):
    """A Monte-Carlo run is too small to resolve the effect it is meant to measure."""


class ConfigError(CVQKDError):
    """Malformed or inconsistent scenario configuration."""


class TruncationWarning(UserWarning):
    """Fock-space cutoff is too small for the requested accuracy."""


class IntegrationWarning(UserWarning):
    """Numerical quadrature did not converge to the requested tolerance."""

"""Exception hierarchy shared by the numerical modules and the CLI."""


class MetastableError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(MetastableError, ArithmeticError):
    """A numerical routine failed (bracketing, convergence, blow-up...)."""


class DegenerateLandscapeError(NumericalError):
    """A stationary point has a Hessian eigenvalue too close to zero."""


class ConnectionFailure(NumericalError):
    """Gradient flow from a saddle did not reach a known minimum."""


class DisconnectedGraphError(NumericalError):
    """Source and targets are not connected in the skeleton graph."""


class BlowUpError(NumericalError):
    """A simulated trajectory left the admissible region or became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnreliableEstimateError(NumericalError):
    """Too many capped trajectories to report a meaningful mean."""


class ConfigError(MetastableError, ValueError):
    """Invalid run configuration."""

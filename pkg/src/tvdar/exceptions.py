"""Exception hierarchy.

Input problems derive from :class:`ValidationError`; failures of a numerical
procedure on valid input derive from :class:`NumericalError`. The CLI maps
the two families onto distinct exit codes.
"""


class TvdarError(Exception):
    """Base class for all package errors."""


class ValidationError(TvdarError, ValueError):
    """Invalid input data or arguments."""


class NumericalError(TvdarError, ArithmeticError):
    """A numerical procedure failed on otherwise valid input."""


class SimulationExplosion(NumericalError):
    """A simulated path left the finite range.

    Attributes
    ----------
    index : int
        Zero-based position (after burn-in) of the first offending value;
        negative when the explosion happened during burn-in.
    """

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"simulated path exploded at index {index}")


class SingularFitError(NumericalError):
    """The data carry no information about the parameters (e.g. constant input)."""


class FitError(NumericalError):
    """No optimizer start converged."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""

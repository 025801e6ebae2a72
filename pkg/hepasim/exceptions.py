"""
Exceptions, declared here to not put in __init__
"""


class HepasimError(ValueError):
    """
    Base exception for hepasim, allowing a reference to the analytic statement
    that the failure concerns.

    Attributes:
        message (str): The explanation of why the exception was raised
        statement (str | None): The name of the bound or property that
            explains why the exception was raised

    Inherits:
        ValueError
    """

    def __init__(self, message: str, statement: str | None = None):
        super().__init__(message)
        self.message = message
        self.statement = statement


class EmptyPortal(HepasimError):
    """No cell centre falls inside the portal disc."""


class PoleInput(HepasimError):
    """The growth law was evaluated at or below its pole u = -kappa."""


class NoConvergence(HepasimError):
    """
    An iterative solve did not reach its tolerance.

    Attributes:
        max_iters: The iteration budget that was exhausted
        residual_norm: The max-norm residual at the last iterate
    """

    def __init__(self, max_iters: int, residual_norm: float):
        super().__init__(
            f"No convergence after {max_iters} iterations, "
            f"residual {residual_norm:.3e}."
        )
        self.max_iters = max_iters
        self.residual_norm = residual_norm


class SolvabilityViolated(HepasimError):
    """The right-hand side of a pure Neumann problem does not integrate to zero."""


class StabilityViolation(HepasimError):
    """
    The time step exceeds the explicit-reaction stability limit.

    Attributes:
        dt: The requested time step
        dt_max: The admissible maximum for the current state
    """

    def __init__(self, dt: float, dt_max: float):
        super().__init__(
            f"Time step {dt:.3e} exceeds the stability limit {dt_max:.3e}.",
            "explicit reaction stability",
        )
        self.dt = dt
        self.dt_max = dt_max


class InvariantViolation(HepasimError):
    """A state invariant failed by more than roundoff."""


class NoValidSamples(HepasimError):
    """Every sample had a degenerate denominator."""


class InconsistentInputs(HepasimError):
    """Snapshots and trajectory samples do not come from the same run."""


class UnknownPreset(HepasimError):
    """The requested scenario preset does not exist."""


class ParseError(HepasimError):
    """A trajectory or snapshot file could not be parsed."""


class ConfigError(HepasimError):
    """A scenario configuration is invalid or references missing files."""

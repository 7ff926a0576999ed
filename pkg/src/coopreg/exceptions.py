"""Exception hierarchy.

Each family maps onto one CLI exit status (see :mod:`coopreg.cli`).
"""


class CoopregError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ValidationError(CoopregError, ValueError):
    """Malformed input: bad shapes, negative weights, schema violations."""

    exit_code = 1


class AssumptionViolation(CoopregError):
    """A solvability hypothesis fails for the given data.

    Parameters
    ----------
    assumption : str
        Key of the violated hypothesis, e.g. ``"connectivity"``.
    message : str
        Human readable explanation.
    """

    exit_code = 2

    def __init__(self, assumption, message, **details):
        super().__init__(f"[{assumption}] {message}")
        self.assumption = assumption
        self.details = details


class NumericalError(CoopregError):
    """A numerical procedure failed or produced an untrustworthy result."""

    exit_code = 3


class RegulatorError(NumericalError):
    """Regulator equations could not be solved to tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DesignError(NumericalError):
    """Gain design did not converge or failed its post-check."""


class SimulationDiverged(NumericalError):
    """Non-finite state encountered during simulation."""

    def __init__(self, step):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


class IdentityViolation(NumericalError):
    """An error-coordinate identity failed on a recorded trace.

    This signals an implementation bug rather than a model property.
    """

    def __init__(self, identity, step, residual):
        super().__init__(f"identity {identity!r} violated at step {step} (residual={residual:.3e})")
        self.identity = identity
        self.step = step
        self.residual = residual

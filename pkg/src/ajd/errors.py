"""Exception hierarchy shared by all ajd modules."""


class AJDError(Exception):
    """Base class for ajd errors."""


class InadmissibleSpecError(AJDError, ValueError):
    """Raised when an operation requires an admissible model specification."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class StateSpaceError(AJDError, ValueError):
    """A state lies outside the canonical state space R_+^m x R^(d-m)."""


class TransformDomainError(AJDError, ArithmeticError):
    """The jump transform diverges (Re(u_i) reached an exponential rate).

    ``time`` carries the integration time at which the violation was
    detected, or ``None`` outside an ODE solve.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UnstableMatrixError(AJDError, ValueError):
    """A matrix required to be stable (Hurwitz) is not."""


class SimulationError(AJDError, RuntimeError):
    """Path simulation failed (e.g. thinning bound violated after all retries)."""


class ClassificationError(AJDError, ValueError):
    """An operation was gated on a stability class that the spec does not have."""


class SchemaError(AJDError, ValueError):
    """An input or artifact file does not match its documented schema."""

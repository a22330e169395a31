"""Exception hierarchy shared by all modules."""


class AuditError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(AuditError, ValueError):
    """Invalid model or configuration parameters."""


class ContractError(AuditError, ValueError):
    """A function precondition was violated by the caller."""


class DomainError(AuditError, ValueError):
    """A quantity is evaluated outside the set where it is defined."""


class NumericalError(AuditError, ArithmeticError):
    """A numerical kernel failed (singular matrix, non-convergence)."""


class TrainingError(AuditError, RuntimeError):
    """Gradient training diverged."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class ConsistencyError(AuditError, AssertionError):
    """Two independent computations of the same quantity disagree."""


class SpecError(AuditError, KeyError):
    """A plot or experiment spec references something that does not exist."""

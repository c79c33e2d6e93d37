"""Exception hierarchy."""


class IKernelError(Exception):
    """Base class for all package errors."""


class DomainError(IKernelError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(IKernelError, ValueError):
    """Invalid or unresolvable configuration."""


class PreconditionError(IKernelError, ValueError):
    """A documented precondition does not hold."""


class ContractError(IKernelError, ValueError):
    """Input violates a structural contract (e.g. symmetry)."""


class AssemblyError(IKernelError, ArithmeticError):
    """Non-finite values while assembling a normal system."""


class NumericalError(IKernelError, ArithmeticError):
    """A linear solve failed where it was expected to succeed."""


class SingularityError(IKernelError, ArithmeticError):
    """Division by a vanishing quantity."""


class UnboundedBasisError(IKernelError, ValueError):
    """The density is too small for a bounded weighted basis."""


class DependentSeedsError(IKernelError, ValueError):
    """Gram-Schmidt seeds are numerically dependent."""


class UnsupportedMeasureError(IKernelError, ValueError):
    """Operation only defined for a specific exploration measure."""


class InfeasibleConstructionError(IKernelError, ValueError):
    """Lower-bound construction cannot be built with the given parameters."""

    def __init__(self, message, max_feasible=None):
        super().__init__(message)
        self.max_feasible = max_feasible


class RetryExceededError(IKernelError, RuntimeError):
    """Randomized search ran out of budget."""


class DatasetFormatError(IKernelError, ValueError):
    """Malformed dataset file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset

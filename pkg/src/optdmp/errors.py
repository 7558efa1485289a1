"""Exception hierarchy shared across the package."""


class OptDmpError(Exception):
    """Base class for all package errors."""


class ContractError(OptDmpError, ValueError):
    """An input violated a documented precondition."""


class CapabilityError(OptDmpError):
    """The requested operation needs something the object does not provide."""


class NumericalError(OptDmpError, ArithmeticError):
    """Non-finite values or a failed numerical sanity check."""


class SolverStateError(OptDmpError):
    """A trajectory that must come from a converged solve did not."""


class OutOfRegionError(ContractError):
    """A point lies outside the sampling region."""


class BudgetError(OptDmpError):
    """A requested grid would exceed the configured solve budget."""

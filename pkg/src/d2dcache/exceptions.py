"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConstructionError(DomainError):
    """A model could not be built from otherwise valid parameters."""


class BudgetExceededError(RuntimeError):
    """An exhaustive search would exceed its enumeration budget."""

class DomainError(ValueError):
    """A parameter lies outside the domain an operation is defined on."""


class TrajectoryError(ValueError):
    """A path is malformed: not nearest-neighbour, not rooted at the origin, or not dyadic."""


class BudgetExceededError(MemoryError):
    """The requested allocation does not fit the configured memory budget."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

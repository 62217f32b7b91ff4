"""Exception types shared across reachkit modules."""


class GridMismatchError(ValueError):
    """Two gridded objects do not live on the same grid."""


class OutOfDomainError(ValueError):
    """A query point lies outside the grid's (x, y) bounds."""


class BoundViolationError(ValueError):
    """An action or disturbance vector violates its box bounds."""


class CFLViolationError(ValueError):
    """The requested time step breaks the CFL stability bound."""


class InfeasibleTaskError(RuntimeError):
    """One or more tasks cannot be solved under the active constraint."""

    def __init__(self, message: str, task_ids: list[int]):
        super().__init__(message)
        self.task_ids = task_ids

"""Exception types shared across the engine."""


class DomainError(ValueError):
    """A parameter vector lies outside the natural domain of its family."""


class FamilyMismatchError(ValueError):
    """Two parameter vectors belong to different families or dimensions."""


class ConvergenceError(RuntimeError):
    """An iterative inversion exceeded its iteration cap."""


class EstimationError(RuntimeError):
    """A Monte Carlo estimate hit a non-finite value.

    Carries the offending draw (and iteration context, when the run loop
    re-raises it).
    """

    def __init__(self, message, draw=None, iteration=None):
        super().__init__(message)
        self.draw = draw
        self.iteration = iteration

"""Exception types shared across the lab."""


class LabError(Exception):
    pass


class ValidationError(LabError, ValueError):
    """Bad input: malformed spec, violated precondition, inconsistent spaces."""


class FormError(LabError):
    """A form matrix lacks a property an operation needs (Markov, transience)."""


class SolverError(LabError):
    """An iterative method failed; ``best`` holds the best iterate seen."""

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class InvariantViolation(LabError, AssertionError):
    """A mathematically guaranteed property failed to hold: a bug trap."""

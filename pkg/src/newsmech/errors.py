"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can map it
onto an exit status and a JSON error field.
"""


class NewsMechError(Exception):
    code = "error"
    exit_code = 1


class DomainError(NewsMechError, ValueError):
    """An argument lies outside the domain of an operation."""

    code = "domain"


class ValidationError(NewsMechError, ValueError):
    """A configuration or environment violates a model assumption."""

    code = "validation"


class InfeasibleError(NewsMechError, ValueError):
    code = "infeasible"


class ICViolationError(NewsMechError, ValueError):
    code = "ic_violation"


class ResourceError(NewsMechError, RuntimeError):
    code = "resource"


class UnsupportedInstanceError(NewsMechError):
    """Instance is outside what the solvers handle (e.g. needs ironing)."""

    code = "unsupported"
    exit_code = 2


class RegularityError(UnsupportedInstanceError):
    code = "non_regular"


class ConvergenceError(NewsMechError, RuntimeError):
    code = "non_convergence"
    exit_code = 3

    def __init__(self, message, gap=None, iterations=None):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations

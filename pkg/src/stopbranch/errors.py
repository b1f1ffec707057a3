"""Exception types shared across the package."""


class StopBranchError(Exception):
    """Base class for all package errors."""


class DomainError(StopBranchError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(StopBranchError):
    """A truncated space or dense matrix would exceed the configured limit."""


class ContractViolation(StopBranchError, RuntimeError):
    """A caller broke a precondition that is not a plain domain check."""


class NonConvergenceError(StopBranchError, RuntimeError):
    """A series or quadrature did not reach its tolerance.

    The partial result is kept on ``partial`` so callers can still report it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ModelError(StopBranchError, ValueError):
    """A model file could not be parsed or failed validation.

    ``locus`` names the offending field (e.g. ``law[0].offspring[1].prob``)
    or a ``line:col`` position for syntax errors.
    """

    def __init__(self, message, locus=None):
        if locus:
            message = f"{locus}: {message}"
        super().__init__(message)
        self.locus = locus

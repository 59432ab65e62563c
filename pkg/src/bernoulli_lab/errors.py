"""Exception types shared across the package."""


class BernoulliLabError(Exception):
    """Base class for all package errors."""


class DomainError(BernoulliLabError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class StructureError(BernoulliLabError):
    """A field does not have the topological structure an operation needs."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class ResourceError(BernoulliLabError):
    """A request would exceed a configured resource cap."""


class ConvergenceError(BernoulliLabError):
    """An iteration failed to converge; ``residual`` holds the last residual."""

    def __init__(self, message, residual=None, value=None):
        super().__init__(message)
        self.residual = residual
        self.value = value


class UnsupportedFamilyError(BernoulliLabError, ValueError):
    """The solution family has no global holomorphic extension."""


class FitError(BernoulliLabError):
    """A one-dimensional fit could not be bracketed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverError(BernoulliLabError):
    """The energy descent diverged."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

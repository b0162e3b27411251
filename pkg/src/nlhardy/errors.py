"""Exception hierarchy shared by every module."""


class NlHardyError(Exception):
    """Base class for all library errors."""


class ParameterError(NlHardyError, ValueError):
    """Out-of-range scalar parameters (d, s, alpha, lambda, ...)."""


class ValidationError(NlHardyError, ValueError):
    """A configuration violates a structural invariant."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class DomainError(NlHardyError, ValueError):
    """A point lies outside the set where an operator is defined."""


class DiagnosticError(NlHardyError):
    """A numerical assumption (e.g. sampled monotonicity) failed."""


class DegenerateConfigError(NlHardyError):
    """The stiffness form is singular; ``result`` carries the lambda = 0 mode."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConvergenceError(NlHardyError):
    """An iterative solver hit its budget; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last

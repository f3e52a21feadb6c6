"""Exception types shared across the package."""


class SubdiffError(Exception):
    """Base class for all package errors."""


class DomainError(SubdiffError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConvergenceError(SubdiffError, RuntimeError):
    """An iterative procedure stopped before meeting its tolerance."""


class ConfigError(SubdiffError, ValueError):
    """A configuration file or specification is malformed or inconsistent."""


class SolverError(SubdiffError, RuntimeError):
    """A time-stepping solver failed (non-finite state, Newton breakdown)."""


class HypothesisError(SubdiffError):
    """Structural hypotheses fail and the caller did not force the run."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report

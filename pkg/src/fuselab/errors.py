"""Exception hierarchy shared by every fuselab module."""


class FuselabError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DomainError(FuselabError, ValueError):
    """Input violates a documented precondition (bad value, shape or schema)."""

    exit_code = 3


class NumericalError(FuselabError, ArithmeticError):
    """A numerical routine failed, e.g. a covariance matrix is not positive definite."""

    exit_code = 4


class TrainingError(NumericalError):
    """Every restart of a model fit failed.

    Attributes
    ----------
    stage : str or None
        Pipeline stage that was being trained, when known.
    diagnostics : list of str
        One message per failed restart.
    """

    def __init__(self, message, stage=None, diagnostics=None):
        self.stage = stage
        self.diagnostics = list(diagnostics or [])
        if stage is not None:
            message = f"[{stage}] {message}"
        super().__init__(message)

"""Exception types shared across the package."""


class KwcError(Exception):
    """Base class for all package errors."""


class GridMismatchError(KwcError):
    """Fields live on different grids or have the wrong shape."""


class PreconditionError(KwcError):
    """An operation was called with inputs outside its contract."""


class ConfigError(KwcError):
    """Run configuration is malformed or violates the admissible class."""


class StepSizeError(KwcError):
    """The strong-convexity margin of the implicit step rejects this h."""


class SolverError(KwcError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class SnapshotFormatError(KwcError):
    """A field snapshot file could not be parsed."""

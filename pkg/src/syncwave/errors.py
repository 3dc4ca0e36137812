"""Exception hierarchy shared by all modules."""


class SyncwaveError(Exception):
    """Base class; ``kind`` is used for the machine-readable CLI error line."""

    kind = "error"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigurationError(SyncwaveError):
    kind = "configuration"


class ShapeError(SyncwaveError, ValueError):
    kind = "shape"


class SingularOperatorError(SyncwaveError):
    kind = "singular_operator"


class DegenerateNodesError(SyncwaveError):
    kind = "degenerate_nodes"


class UnsupportedVariantError(SyncwaveError):
    kind = "unsupported_variant"


class NumericalOverflowError(SyncwaveError, FloatingPointError):
    kind = "numerical_overflow"


class StepFailure(SyncwaveError):
    """Fixed-point iteration did not converge; ``time`` is where the step started."""

    kind = "step_failure"

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InsufficientDataError(SyncwaveError):
    kind = "insufficient_data"


class BracketError(SyncwaveError):
    kind = "bracket"

"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code (see cli.EXIT_CODES).
"""


class TacError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(TacError):
    """An argument is outside its documented domain."""


class DimensionError(TacError):
    """Shapes or lengths of inputs do not line up."""


class NormalizationError(TacError):
    """A vector with zero norm cannot be normalized."""


class FormatError(TacError):
    """A file is structurally invalid (bad magic, truncation, unparsable line)."""


class DataError(TacError):
    """A file parsed but its content violates a contract (NaN, length mismatch)."""


class SelectionError(TacError):
    """Noun selection produced an empty result (degenerate centers)."""


class TrainingDiverged(TacError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")

"""Exception hierarchy shared by every DCPR module."""

from typing import Any


class DCPRError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DCPRError, ValueError):
    """Operand shapes do not fit the operation."""


class NonFiniteError(DCPRError, ArithmeticError):
    """An operation produced NaN or Inf."""


class ScheduleError(DCPRError, ValueError):
    """Invalid noise schedule, diffusion step, or reverse subsequence."""


class ModelInputError(DCPRError, ValueError):
    """A denoiser received ids or widths it cannot handle."""


class LossError(DCPRError, ValueError):
    """Loss arguments are unusable (empty negatives, non-scalar loss)."""


class DataError(DCPRError):
    """Base class for dataset problems."""


class CheckInFormatError(DataError):
    """A check-in CSV row could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EmptyDatasetError(DataError):
    """Nothing is left after filtering."""


class SynthSpecError(DataError, ValueError):
    """Synthetic dataset spec is inconsistent."""


class CandidateError(DataError):
    """No candidate POIs can be selected."""


class ConfigError(DCPRError, ValueError):
    """Unknown config key or invalid value."""


class CheckpointError(DCPRError):
    """Base class for checkpoint file problems."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or unexpected model kind."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written by an unsupported format version."""


class CheckpointHashError(CheckpointError):
    """Stored content hash does not match the file contents."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the declared structure is complete."""


class StageError(DCPRError):
    """A training stage aborted; carries whatever report was assembled so far."""

    def __init__(self, message: str, report: Any = None):
        self.report = report
        super().__init__(message)


class FreezeViolationError(StageError):
    """A frozen parameter set changed during training."""

"""Exception types shared across the toolkit.

Raised errors split into three families, mirroring the CLI exit codes:
data errors (malformed or inconsistent annotation/prediction content),
backend errors (a detector run failed), and config errors.
"""

from __future__ import annotations


class PseudoLoopError(Exception):
    """Base class for all toolkit errors."""


class DataError(PseudoLoopError):
    """A dataset or prediction file is malformed or inconsistent."""


class MalformedJsonError(DataError):
    """Input is not parseable JSON (or not valid UTF-8)."""


class SchemaViolationError(DataError):
    """A required field is missing, has the wrong type, or breaks a value invariant."""


class UnresolvableReferenceError(DataError):
    """An image_id or category_id does not resolve within the owning dataset."""


class DuplicateIdError(DataError):
    """Two records of the same kind share an id."""


class InsufficientInstancesError(DataError):
    """A category has fewer annotations than the requested number of shots."""

    def __init__(self, category_id: int, available: int, requested: int):
        self.category_id = category_id
        self.available = available
        self.requested = requested
        super().__init__(
            f"category {category_id} has {available} annotations, "
            f"but {requested} were requested"
        )


class NoGroundTruthError(DataError):
    """Average precision is undefined for a class with zero ground-truth instances."""


class CategoryConflictError(DataError):
    """Two datasets disagree on category structure for the same name."""


class MalformedPredictionsError(DataError):
    """A prediction file does not follow the detection results format."""


class BackendError(PseudoLoopError):
    """Base class for detector backend failures."""


class BackendFailureError(BackendError):
    """An external detector command exited non-zero or misbehaved."""

    def __init__(self, message: str, exit_code: int | None = None, stderr: str = ""):
        self.exit_code = exit_code
        self.stderr = stderr
        detail = message
        if exit_code is not None:
            detail += f" (exit code {exit_code})"
        if stderr:
            detail += f": {stderr}"
        super().__init__(detail)


class BackendTimeoutError(BackendError):
    """An external detector command exceeded its wall-clock limit."""


class MissingPredictionFileError(BackendError):
    """The file backend has no prediction file for the current round."""


class InvalidConfigError(PseudoLoopError):
    """A pipeline or backend configuration is incomplete or out of range."""

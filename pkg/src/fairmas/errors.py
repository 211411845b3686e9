"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` so the CLI can map
failures to exit codes and reports without string matching.
"""

from __future__ import annotations

from typing import Any


class FairmasError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "ERROR"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:
        if self.details:
            extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.details.items()))
            return f"{self.code}: {self.message} ({extras})"
        return f"{self.code}: {self.message}"


class IndexOutOfRangeError(FairmasError):
    code = "INDEX_OUT_OF_RANGE"


class NotProtectedError(FairmasError):
    code = "NOT_PROTECTED"


class ShapeMismatchError(FairmasError):
    code = "SHAPE_MISMATCH"


class TransitionLookupError(FairmasError):
    """No or multiple transition entries match a (state, joint action, profile)."""

    code = "TRANSITION_LOOKUP_FAILED"


class EnumerationCapExceededError(FairmasError):
    code = "ENUMERATION_CAP_EXCEEDED"


class LfOverlapsProtectedError(FairmasError):
    code = "LF_OVERLAPS_PROTECTED"


class UnknownAttributeError(FairmasError):
    code = "UNKNOWN_ATTRIBUTE"


class ParseError(FairmasError):
    code = "PARSE_ERROR"


class UnsupportedSchemaVersionError(FairmasError):
    code = "UNSUPPORTED_SCHEMA_VERSION"


class ValidationFailedError(FairmasError):
    code = "VALIDATION_FAILED"

    def __init__(self, message: str, violations: list) -> None:
        super().__init__(message)
        self.violations = violations

    def __str__(self) -> str:
        lines = [f"{self.code}: {self.message}"]
        lines += [f"  {v.code} at {v.location}: {v.message}" for v in self.violations]
        return "\n".join(lines)


class BindFailedError(FairmasError):
    code = "BIND_FAILED"


class GridTooLargeError(FairmasError):
    code = "GRID_TOO_LARGE"

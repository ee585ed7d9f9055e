"""Error types shared across the package.

Kept deliberately flat: everything derives from DarevalError so callers
can catch broadly, while the CLI maps subclasses onto exit codes.
"""

from __future__ import annotations


class DarevalError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DarevalError):
    """Tensor or vector shapes are incompatible for an operation."""


class ConfigError(DarevalError):
    """A configuration object violates its invariants."""


class FormatError(DarevalError):
    """A binary or JSON artifact does not match its declared layout."""


class ManifestError(DarevalError):
    """A case manifest could not be parsed or violates the schema."""


class TemplateError(DarevalError):
    """A prompt template could not be filled from the given elements."""


class CoverageError(DarevalError):
    """Verdicts do not cover exactly the expected checkpoint ids."""

    def __init__(self, message: str, missing: list[str] | None = None,
                 extra: list[str] | None = None):
        super().__init__(message)
        self.missing = missing or []
        self.extra = extra or []


class TransportError(DarevalError):
    """The judge endpoint could not be reached after all retries."""


class JudgeParseError(DarevalError):
    """The judge reply could not be parsed even after a re-ask."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class GenerationError(DarevalError):
    """Judge-generated checkpoints violated the structural rules."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response

"""Exception hierarchy shared by every stage of the engine."""

from __future__ import annotations

from typing import Any


class GoaError(Exception):
    """Base class for all engine errors."""


class ConfigError(GoaError):
    pass


class EmptyDocument(GoaError):
    pass


class DimensionMismatch(GoaError):
    pass


class EmptyInput(GoaError):
    pass


class DuplicateSelection(GoaError):
    pass


class ForeignChunk(GoaError):
    pass


class TemplateError(GoaError):
    pass


class PromptOverflow(GoaError):
    def __init__(self, tokens: int, limit: int, role: str = "prompt") -> None:
        super().__init__(f"{role} has {tokens} tokens, exceeding the context window of {limit}")
        self.tokens = tokens
        self.limit = limit


class UnparseablePrompt(GoaError):
    pass


class ProviderError(GoaError):
    """Non-retryable failure reported by a remote model service (or retries exhausted)."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class ProviderTimeout(ProviderError):
    pass


class AuthMissing(ProviderError):
    pass


# Chat and embedding failures share the provider hierarchy so callers can catch either.
BackendError = ProviderError
EmbedderFailure = ProviderError


class ParseError(GoaError):
    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MissingField(ParseError):
    pass


class NoOverlap(GoaError):
    pass


class AuditFailure(GoaError):
    def __init__(self, violations: list[str]) -> None:
        super().__init__(f"{len(violations)} audit violation(s):\n" + "\n".join(violations))
        self.violations = violations


class PipelineError(GoaError):
    """A run aborted; ``trace`` holds everything recorded before the failure."""

    def __init__(self, message: str, trace: Any = None) -> None:
        super().__init__(message)
        self.trace = trace

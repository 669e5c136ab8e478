"""Exceptions used by the hotbias library."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class HotbiasError(Exception):
    """Base exception for hotbias errors.

    Attributes:
        message: Human-readable error message.
        stage: Pipeline stage the error originated from, when known (for example
            `index`, `rada`, `retrieval`, `asr`).
        details: JSON-like payload describing the offending input, when
            available.
    """

    message: str
    stage: Optional[str] = None
    details: Optional[object] = None

    def __post_init__(self) -> None:
        """Initialize the base Exception message."""
        super().__init__(self.message)

    def __str__(self) -> str:
        return self.message


class ValidationError(HotbiasError):
    """Raised when an input violates an operation's preconditions."""


class EmbeddingError(ValidationError):
    """Raised when text cannot be embedded (empty text, all-zero vector)."""


class DimensionMismatchError(ValidationError):
    """Raised when vector dimensions or encoder fingerprints disagree."""


class IndexFormatError(HotbiasError):
    """Raised when a persisted hotword index cannot be decoded."""


class DecodingError(HotbiasError):
    """Raised when a token scorer returns an invalid distribution."""


class ConfigError(HotbiasError):
    """Raised when a run configuration cannot be parsed or is invalid."""


class OracleError(HotbiasError):
    """Raised when an ASR oracle fails to produce a hypothesis."""


class AuthenticationError(OracleError):
    """Raised when the remote oracle rejects the API token (HTTP 401)."""


class RateLimitError(OracleError):
    """Raised when the remote oracle rate limit is exceeded (HTTP 429)."""


class ServerError(OracleError):
    """Raised for remote oracle server-side errors (HTTP 5xx)."""


class NetworkError(OracleError):
    """Raised for network/transport errors talking to the remote oracle."""


class StageError(HotbiasError):
    """Raised by the end-to-end runner when a pipeline stage fails."""

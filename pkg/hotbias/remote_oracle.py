"""HTTP ASR oracle for vocabulary filtering against a remote recognizer."""

from __future__ import annotations

import logging
import os
import time
from typing import Optional, cast

import requests

from hotbias.exceptions import (
    AuthenticationError,
    NetworkError,
    OracleError,
    RateLimitError,
    ServerError,
    ValidationError,
)
from hotbias.rada import OracleRequest
from hotbias.types import JsonValue

logger = logging.getLogger(__name__)


class RemoteAsrOracle:
    """RADA oracle backed by a synthesize-and-recognize HTTP service.

    Each request posts `{"text", "seed", "hotword_id"}` as JSON to
    `<base_url>/<endpoint>` and reads the `hypothesis` field of the JSON
    reply. The service is expected to be deterministic per request.

    Environment variables:
        - `HOTBIAS_ORACLE_URL`: base URL (used when `base_url` is not provided)
        - `HOTBIAS_ORACLE_TOKEN`: API token (optional; sent as `Authorization:
          Token <token>`)
        - `HOTBIAS_TIMEOUT_SECONDS`: request timeout (default: 30.0)
        - `HOTBIAS_MAX_RETRIES`: retry count (default: 3)
        - `HOTBIAS_RETRY_BACKOFF_SECONDS`: base backoff seconds (default: 0.5)

    Retry behavior:
        HTTP 500/502/503/504 responses and `requests` transport exceptions are
        retried with backoff `retry_backoff_seconds * (2 ** attempt)`.

    Error mapping:
        - 401 → `AuthenticationError`
        - 429 → `RateLimitError`
        - 5xx → `ServerError`
        - other non-2xx, or a reply without a string `hypothesis` →
          `OracleError`
        - transport failure after the last retry → `NetworkError`

    Args:
        base_url: Service base URL.
        api_token: Optional API token.
        endpoint: Path of the recognition endpoint.
        timeout_seconds: Per-request timeout in seconds.
        max_retries: Maximum number of retries for transient failures.
        retry_backoff_seconds: Base backoff duration in seconds.
        session: Optional pre-configured `requests.Session` (useful for tests).

    Raises:
        ValidationError: If no base URL is given or configured.
    """

    _URL_ENV_VAR = "HOTBIAS_ORACLE_URL"
    _TOKEN_ENV_VAR = "HOTBIAS_ORACLE_TOKEN"  # nosec B105
    _ENV_PREFIX = "HOTBIAS"
    _RETRYABLE_STATUS_CODES = frozenset({500, 502, 503, 504})

    def __init__(
        self,
        *,
        base_url: Optional[str] = None,
        api_token: Optional[str] = None,
        endpoint: str = "transcribe",
        timeout_seconds: Optional[float] = None,
        max_retries: Optional[int] = None,
        retry_backoff_seconds: Optional[float] = None,
        session: Optional[requests.Session] = None,
    ) -> None:
        resolved_url = base_url or os.getenv(self._URL_ENV_VAR)
        if not resolved_url:
            raise ValidationError(
                message=f"Missing oracle URL. Provide base_url= or set "
                f"{self._URL_ENV_VAR}."
            )
        self._url = f"{resolved_url.rstrip('/')}/{endpoint.lstrip('/')}"
        self._timeout_seconds = (
            timeout_seconds
            if timeout_seconds is not None
            else self._get_env_float("TIMEOUT_SECONDS", default=30.0)
        )
        self._max_retries = (
            max_retries
            if max_retries is not None
            else self._get_env_int("MAX_RETRIES", default=3)
        )
        self._retry_backoff_seconds = (
            retry_backoff_seconds
            if retry_backoff_seconds is not None
            else self._get_env_float("RETRY_BACKOFF_SECONDS", default=0.5)
        )

        self._session = session or requests.Session()
        self._session.headers.update({"Accept": "application/json"})
        token = api_token or os.getenv(self._TOKEN_ENV_VAR)
        if token:
            self._session.headers.update({"Authorization": f"Token {token}"})

    def close(self) -> None:
        """Close the underlying HTTP session."""

        self._session.close()

    def transcribe(self, request: OracleRequest) -> str:
        """Synthesize and recognize one carrier sentence.

        Raises:
            OracleError: For non-2xx responses (mapped to more specific
                subclasses) or a malformed reply.
            NetworkError: For transport exceptions after exhausting retries.
        """

        payload = {
            "text": request.text,
            "seed": request.seed,
            "hotword_id": request.hotword_id,
        }
        data = self._post(payload)
        hypothesis = data.get("hypothesis") if isinstance(data, dict) else None
        if not isinstance(hypothesis, str):
            raise OracleError(
                message=f"Oracle reply for {request.hotword_id!r} has no "
                "'hypothesis' string.",
                stage="rada",
                details=data,
            )
        return hypothesis

    def _post(self, payload: JsonValue) -> JsonValue:
        for attempt in range(self._max_retries + 1):
            try:
                response = self._session.post(
                    self._url, json=payload, timeout=self._timeout_seconds
                )
            except requests.exceptions.RequestException as exc:
                if attempt < self._max_retries:
                    logger.debug(
                        "oracle transport error (attempt %d): %s", attempt, exc
                    )
                    self._sleep_backoff(attempt)
                    continue
                raise NetworkError(
                    message=f"Network error calling POST {self._url}: {exc!s}",
                    stage="rada",
                ) from exc

            if (
                response.status_code in self._RETRYABLE_STATUS_CODES
                and attempt < self._max_retries
            ):
                logger.debug(
                    "oracle returned %d (attempt %d)", response.status_code, attempt
                )
                self._sleep_backoff(attempt)
                continue

            data = self._parse_response_data(response)
            if 200 <= response.status_code < 300:
                return data
            raise self._map_http_error(response.status_code, data)

        raise NetworkError(  # pragma: no cover
            message=f"Unexpected retry loop exit for POST {self._url}",
            stage="rada",
        )

    def _sleep_backoff(self, attempt: int) -> None:
        time.sleep(self._retry_backoff_seconds * (2**attempt))

    @staticmethod
    def _parse_response_data(response: requests.Response) -> JsonValue:
        try:
            return cast(JsonValue, response.json())
        except ValueError:
            return response.text

    def _map_http_error(self, status_code: int, data: JsonValue) -> OracleError:
        message = f"POST {self._url} failed ({status_code})."
        if isinstance(data, dict):
            for key in ("detail", "error", "message"):
                value = data.get(key)
                if isinstance(value, str) and value.strip():
                    message = f"POST {self._url} failed ({status_code}): {value}"
                    break
        elif isinstance(data, str) and data.strip():
            message = f"POST {self._url} failed ({status_code}): {data}"

        details = {"status_code": status_code, "response": data}
        if status_code == 401:
            return AuthenticationError(message=message, stage="rada", details=details)
        if status_code == 429:
            return RateLimitError(message=message, stage="rada", details=details)
        if 500 <= status_code <= 599:
            return ServerError(message=message, stage="rada", details=details)
        return OracleError(message=message, stage="rada", details=details)

    def _get_env_float(self, suffix: str, *, default: float) -> float:
        """Read and parse a float from an env var, with safe fallback."""

        raw = os.getenv(f"{self._ENV_PREFIX}_{suffix}")
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            return default

    def _get_env_int(self, suffix: str, *, default: int) -> int:
        """Read and parse an int from an env var, with safe fallback."""

        raw = os.getenv(f"{self._ENV_PREFIX}_{suffix}")
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            return default

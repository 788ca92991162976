"""Small HTTP JSON client shared by the embedding, rerank, chat and judge adapters."""

from __future__ import annotations

import json
import logging
import time
from typing import Any, Callable

import requests

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 2
DEFAULT_BACKOFF = 0.5


class TransportError(Exception):
    """Raised when a remote endpoint cannot be reached or returns garbage."""


def post_json(url: str, payload: dict[str, Any], *,
              timeout: float = DEFAULT_TIMEOUT,
              retries: int = DEFAULT_RETRIES,
              backoff: float = DEFAULT_BACKOFF,
              headers: dict[str, str] | None = None,
              post_fn: Callable[..., Any] | None = None) -> dict[str, Any]:
    """POST a JSON body and return the decoded JSON response.

    Connection failures and 5xx responses are retried with exponential
    backoff; 4xx responses fail immediately. `post_fn` is injectable so
    tests can run without a live server.
    """
    post = post_fn or requests.post
    merged = {"Content-Type": "application/json"}
    if headers:
        merged.update(headers)
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * (2 ** (attempt - 1)))
            logger.warning("retrying POST %s (attempt %d)", url, attempt + 1)
        try:
            response = post(url, json=payload, headers=merged, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        status = response.status_code
        if 200 <= status < 300:
            try:
                body = response.json()
            except (ValueError, json.JSONDecodeError) as exc:
                raise TransportError(f"non-JSON response from {url}") from exc
            if not isinstance(body, dict):
                raise TransportError(f"expected JSON object from {url}")
            return body
        if 400 <= status < 500:
            raise TransportError(f"POST {url} failed with status {status}: "
                                 f"{response.text[:200]}")
        last_error = TransportError(f"POST {url} failed with status {status}")
    raise TransportError(f"POST {url} failed after {retries + 1} attempts") \
        from last_error

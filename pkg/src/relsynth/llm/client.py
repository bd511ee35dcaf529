"""Client for an OpenAI-compatible chat-completions endpoint.

One user message carries the whole prompt; the compiled entity schema rides
in the ``response_format`` field. Transport errors, HTTP 429, and HTTP 5xx
are retried with exponential backoff; other 4xx responses fail immediately,
with schema-capability rejections reported as their own error type so
callers can tell "endpoint down" from "endpoint cannot do structured
output". Responses whose content is not valid JSON raise a structured-output
violation for the caller to handle (typically by regenerating).
"""

from __future__ import annotations

import json
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import requests

from ..errors import (
    ConfigError,
    EndpointError,
    SchemaRejectedError,
    StructuredOutputViolation,
)

_SCHEMA_REJECTION_MARKERS = ("response_format", "json_schema", "structured output", "schema")


@dataclass
class EndpointConfig:
    url: str
    model: str
    auth_env_var: Optional[str] = None
    max_concurrency: int = 4
    temperature: float = 0.7
    max_tokens: Optional[int] = None
    timeout: float = 60.0
    retries: int = 3
    backoff_base: float = 0.25
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.0
    context_char_budget: Optional[int] = None

    def __post_init__(self):
        if not self.url:
            raise ConfigError("endpoint url must be set")
        if self.retries < 1:
            raise ConfigError(f"retries must be >= 1, got {self.retries}")
        if self.max_concurrency < 1:
            raise ConfigError(f"max_concurrency must be >= 1, got {self.max_concurrency}")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown endpoint config keys: {sorted(unknown)}")
        missing = {"url", "model"} - set(d)
        if missing:
            raise ConfigError(f"endpoint config missing keys: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "EndpointConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"missing endpoint config: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    schema: dict
    schema_name: str = "entity"


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    finish_reason: str
    usage: dict


class EndpointClient:
    def __init__(self, config: EndpointConfig, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._sleep = sleep
        self._headers = {"Content-Type": "application/json"}
        if config.auth_env_var:
            token = os.environ.get(config.auth_env_var)
            if not token:
                raise ConfigError(
                    f"endpoint auth: environment variable {config.auth_env_var} is not set"
                )
            self._headers["Authorization"] = f"Bearer {token}"

    def _body(self, request: CompletionRequest) -> dict:
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.config.temperature,
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": request.schema_name,
                    "schema": request.schema,
                    "strict": True,
                },
            },
        }
        if self.config.max_tokens is not None:
            body["max_tokens"] = self.config.max_tokens
        return body

    def _parse_response(self, resp: requests.Response) -> CompletionResponse:
        try:
            data = resp.json()
            choice = data["choices"][0]
            content = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
        except (ValueError, LookupError, TypeError) as exc:
            raise EndpointError(f"malformed completion response: {exc}") from None
        try:
            json.loads(content)
        except (json.JSONDecodeError, TypeError):
            raise StructuredOutputViolation(
                f"completion content is not valid JSON (finish reason {finish!r})"
            ) from None
        return CompletionResponse(
            text=content, finish_reason=finish, usage=data.get("usage", {})
        )

    def _fail_4xx(self, resp: requests.Response) -> None:
        detail = resp.text[:500]
        lowered = detail.lower()
        if any(marker in lowered for marker in _SCHEMA_REJECTION_MARKERS):
            raise SchemaRejectedError(
                f"endpoint rejected the structured-output schema (HTTP {resp.status_code}): {detail}"
            )
        raise EndpointError(f"endpoint returned HTTP {resp.status_code}: {detail}")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        cfg = self.config
        last_error: Optional[EndpointError] = None
        for attempt in range(1, cfg.retries + 1):
            try:
                resp = requests.post(
                    cfg.url, json=self._body(request), headers=self._headers, timeout=cfg.timeout
                )
            except requests.RequestException as exc:
                last_error = EndpointError(f"transport failure: {exc}")
            else:
                if resp.status_code == 200:
                    return self._parse_response(resp)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = EndpointError(f"endpoint returned HTTP {resp.status_code}")
                else:
                    self._fail_4xx(resp)
            if attempt < cfg.retries:
                delay = cfg.backoff_base * cfg.backoff_factor ** (attempt - 1)
                if cfg.backoff_jitter:
                    delay += random.random() * cfg.backoff_jitter
                self._sleep(delay)
        raise last_error

    def complete_many(self, requests_list: Sequence[CompletionRequest]) -> list[CompletionResponse]:
        """Run requests under the configured concurrency bound, keeping order."""
        if not requests_list:
            return []
        workers = min(self.config.max_concurrency, len(requests_list))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.complete, requests_list))

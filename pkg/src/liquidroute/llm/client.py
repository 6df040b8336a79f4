"""Minimal chat-completion client over urllib."""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional

log = logging.getLogger(__name__)

API_KEY_ENV = "LIQUIDROUTE_API_KEY"


class TransportError(RuntimeError):
    """The endpoint could not be reached or returned an unusable body."""


@dataclass(frozen=True)
class ExternalAgentConfig:
    endpoint: str
    model: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 4096
    # None replays the full history; n keeps only the last n iterations
    memory_window: Optional[int] = None
    timeout: float = 60.0
    retries: int = 1
    api_key_env: str = API_KEY_ENV

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.memory_window is not None and self.memory_window < 0:
            raise ValueError("memory_window must be non-negative")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")

    def to_json(self) -> dict:
        # the key itself is never serialized, only where it is read from
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "memory_window": self.memory_window,
            "timeout": self.timeout,
            "retries": self.retries,
            "api_key_env": self.api_key_env,
        }


def request_body(cfg: ExternalAgentConfig, system: str, user: str) -> dict:
    return {
        "model": cfg.model,
        "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }


def reply_content(payload: dict) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise TransportError("response has no choices[0].message.content") from None
    return "" if content is None else str(content)


class ChatClient:
    """Posts one prompt pair per call; one in-flight request at a time."""

    def __init__(self, cfg: ExternalAgentConfig):
        self.cfg = cfg
        self.calls = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, body: bytes) -> dict:
        req = urllib.request.Request(self.cfg.endpoint, data=body, headers=self._headers(), method="POST")
        with urllib.request.urlopen(req, timeout=self.cfg.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def complete(self, system: str, user: str) -> str:
        body = json.dumps(request_body(self.cfg, system, user)).encode("utf-8")
        last: Optional[BaseException] = None
        for attempt in range(self.cfg.retries + 1):
            self.calls += 1
            try:
                return reply_content(self._post(body))
            except urllib.error.HTTPError as exc:
                # client errors will not improve on retry
                if exc.code < 500:
                    raise TransportError(f"endpoint returned HTTP {exc.code}") from exc
                last = exc
            except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
                last = exc
            log.warning("request to %s failed (attempt %d): %s", self.cfg.endpoint, attempt + 1, last)
        raise TransportError(f"endpoint unreachable after {self.cfg.retries + 1} attempts: {last}")


"""OpenAI-compatible chat-completions client.

Retries timeouts, transport errors, 429 and 5xx with jittered exponential
backoff (1 s base, doubling, 60 s ceiling). Limits are per process: at most
``max_in_flight`` concurrent requests and ``per_minute_cap`` requests in any
60 s window.
"""
from __future__ import annotations

import logging
import os
import random
import threading
import time
from collections import deque
from typing import Callable, Mapping, Sequence

import httpx

from ..errors import AuthError, BackendError, BackendExhausted, MalformedResponse
from ..protocol.transcript import ChatTurn
from .base import BackendConfig, require_user_last

log = logging.getLogger(__name__)

BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_MAX = 60.0


def backoff_delay(attempt: int, rng: random.Random) -> float:
    ceiling = min(BACKOFF_MAX, BACKOFF_BASE * BACKOFF_FACTOR ** attempt)
    return rng.uniform(ceiling / 2, ceiling)


class RateLimiter:
    """Sliding-window cap on request starts."""

    def __init__(self, cap: int, window: float = 60.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.cap = cap
        self.window = window
        self.clock = clock
        self.sleep = sleep
        self._starts: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self.clock()
                while self._starts and self._starts[0] <= now - self.window:
                    self._starts.popleft()
                if len(self._starts) < self.cap:
                    self._starts.append(now)
                    return
                self.sleep(self._starts[0] + self.window - now)


class LiveBackend:
    def __init__(
        self,
        config: BackendConfig,
        *,
        client: httpx.Client | None = None,
        env: Mapping[str, str] | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)
        self.env = os.environ if env is None else env
        self.sleep = sleep
        self.rng = rng or random.Random()
        self.limiter = RateLimiter(config.per_minute_cap, clock=clock, sleep=sleep)
        self._inflight = threading.BoundedSemaphore(config.max_in_flight)
        self.calls = 0
        self._count_lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        key = self.env.get(self.config.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.config.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, conversation: Sequence[ChatTurn]) -> str:
        require_user_last(conversation)
        headers = self._headers()
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [t.wire() for t in conversation],
        }
        last_error = "no attempt made"
        with self._inflight:
            for attempt in range(self.config.retry_budget + 1):
                if attempt:
                    delay = backoff_delay(attempt - 1, self.rng)
                    log.warning("retry %d after %s (sleep %.1fs)", attempt, last_error, delay)
                    self.sleep(delay)
                self.limiter.acquire()
                with self._count_lock:
                    self.calls += 1
                try:
                    resp = self.client.post(self.config.endpoint, json=body, headers=headers,
                                            timeout=self.config.timeout)
                except httpx.TransportError as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                    continue
                if resp.status_code in (401, 403):
                    raise AuthError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                return parse_completion(resp)
        raise BackendExhausted(
            f"gave up after {self.config.retry_budget + 1} attempts; last error: {last_error}")


def parse_completion(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected response body: {resp.text[:200]}") from exc
    if not isinstance(content, str) or not content.strip():
        raise MalformedResponse("empty message content")
    return content

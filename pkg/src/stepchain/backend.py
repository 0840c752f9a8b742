"""Text-generation backends: deterministic scripts and a live HTTP client.

The scripted backend exists so every part of the loop can be exercised
offline and reproducibly: rules match prompts and hand back canned
responses in a fixed rotation. The live backend speaks the JSON
chat-completions dialect and keeps its network behavior injectable for
testing.
"""
from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import (
    AuthMissing,
    BackendError,
    NoScriptMatch,
    NotScriptedBackend,
    SchemaError,
)

API_KEY_ENV = "STEPCHAIN_API_KEY"
_FALLBACK_KEY_ENV = "OPENAI_API_KEY"

DEFAULT_MAX_TOKENS = 1024


@dataclass(frozen=True)
class GenerationRequest:
    """One sampling request; n_samples texts come back on success."""

    prompt: str
    n_samples: int = 1
    temperature: float = 1.0
    top_p: float = 1.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


class Backend(Protocol):
    def generate(self, request: GenerationRequest) -> list[str]: ...


class MatcherKind(Enum):
    EXACT = "exact"
    CONTAINS = "contains"
    PATTERN = "pattern"

    @classmethod
    def parse(cls, name: str) -> "MatcherKind":
        wanted = name.strip().casefold()
        for member in cls:
            if member.value == wanted:
                return member
        raise ValueError(f"unknown matcher kind: {name!r}")


@dataclass(frozen=True)
class ScriptRule:
    """A prompt matcher plus the responses it serves, in rotation."""

    kind: MatcherKind
    value: str
    responses: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.responses:
            raise ValueError("a script rule needs at least one response")

    def matches(self, prompt: str) -> bool:
        if self.kind is MatcherKind.EXACT:
            return prompt == self.value
        if self.kind is MatcherKind.CONTAINS:
            return self.value in prompt
        return re.search(self.value, prompt) is not None


class ScriptedBackend:
    """Deterministic backend driven by an ordered rule list.

    The first matching rule (registration order) serves each request;
    its responses are consumed round-robin across requests. Thread-safe
    so concurrent benchmark workers can share one instance.
    """

    def __init__(self, rules: list[ScriptRule] | None = None) -> None:
        self._rules: list[ScriptRule] = list(rules or [])
        self._cursors: dict[int, int] = {}
        self._lock = threading.Lock()

    def add_rule(self, rule: ScriptRule) -> None:
        with self._lock:
            self._rules.append(rule)

    def generate(self, request: GenerationRequest) -> list[str]:
        with self._lock:
            for position, rule in enumerate(self._rules):
                if rule.matches(request.prompt):
                    cursor = self._cursors.get(position, 0)
                    out = [
                        rule.responses[(cursor + k) % len(rule.responses)]
                        for k in range(request.n_samples)
                    ]
                    self._cursors[position] = cursor + request.n_samples
                    return out
        head = request.prompt[:120].replace("\n", "\\n")
        raise NoScriptMatch(f"no script rule matches prompt starting {head!r}")


def add_script(backend: Backend, rule: ScriptRule) -> None:
    """Attach a rule, refusing anything that is not a scripted backend."""
    if not isinstance(backend, ScriptedBackend):
        raise NotScriptedBackend(
            f"cannot add script rules to {type(backend).__name__}"
        )
    backend.add_rule(rule)


def load_script(path: str | Path) -> ScriptedBackend:
    """Build a scripted backend from a JSON-lines rule file.

    Each line is {"matcher_kind": ..., "matcher_value": ..., "responses":
    [...]}; file order is precedence order.
    """
    rules: list[ScriptRule] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                rule = ScriptRule(
                    kind=MatcherKind.parse(record["matcher_kind"]),
                    value=record["matcher_value"],
                    responses=tuple(record["responses"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(lineno, f"bad script rule: {exc}") from exc
            rules.append(rule)
    return ScriptedBackend(rules)


class _RateLimiter:
    """Simple sliding-window requests-per-minute limiter."""

    def __init__(self, per_minute: int, clock: Callable[[], float],
                 sleep: Callable[[float], None]) -> None:
        self.per_minute = per_minute
        self.clock = clock
        self.sleep = sleep
        self._stamps: list[float] = []
        self._lock = threading.Lock()

    def wait(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self._stamps = [t for t in self._stamps if now - t < 60.0]
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                delay = 60.0 - (now - self._stamps[0])
            self.sleep(max(delay, 0.0))


_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}
_MAX_ATTEMPTS = 3
_BACKOFF_BASE = 1.0
_BACKOFF_CAP = 30.0


@dataclass
class TokenUsage:
    """Running token totals reported by the endpoint."""

    prompt_tokens: int = 0
    completion_tokens: int = 0
    requests: int = 0

    def add(self, usage: dict) -> None:
        self.prompt_tokens += int(usage.get("prompt_tokens", 0))
        self.completion_tokens += int(usage.get("completion_tokens", 0))
        self.requests += 1


class OpenAICompatibleBackend:
    """Live client for a chat-completions JSON endpoint.

    Transient failures (connection errors, 429, 5xx) are retried up to
    3 attempts with exponential backoff and full jitter (base 1s, cap
    30s). The HTTP transport, sleep function, and jitter source are all
    injectable so tests never touch the network or the real clock.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: str | None = None,
        environment: dict[str, str] | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        requests_per_minute: int | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Callable[[], float] = random.random,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        env = os.environ if environment is None else environment
        self.api_key = api_key or env.get(API_KEY_ENV) or env.get(_FALLBACK_KEY_ENV)
        if not self.api_key:
            raise AuthMissing(
                f"no API credential: set {API_KEY_ENV} or pass api_key"
            )
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.usage = TokenUsage()
        self._sleep = sleep
        self._rng = rng
        self._semaphore = threading.Semaphore(max_in_flight)
        self._limiter = (
            _RateLimiter(requests_per_minute, clock, sleep)
            if requests_per_minute
            else None
        )
        self._usage_lock = threading.Lock()
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def _payload(self, request: GenerationRequest) -> dict:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "n": request.n_samples,
            "max_tokens": request.max_tokens,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        return payload

    def generate(self, request: GenerationRequest) -> list[str]:
        with self._semaphore:
            return self._generate_with_retry(request)

    def _generate_with_retry(self, request: GenerationRequest) -> list[str]:
        last_status: int | None = None
        last_message = "no attempt made"
        for attempt in range(_MAX_ATTEMPTS):
            if self._limiter is not None:
                self._limiter.wait()
            try:
                response = self._client.post(
                    f"{self.base_url}/chat/completions",
                    json=self._payload(request),
                    headers={"Authorization": f"Bearer {self.api_key}"},
                )
            except httpx.HTTPError as exc:
                last_status, last_message = None, f"transport failure: {exc}"
            else:
                if response.status_code == 200:
                    return self._parse_response(response, request.n_samples)
                last_status = response.status_code
                last_message = response.text[:500]
                if response.status_code not in _TRANSIENT_STATUSES:
                    raise BackendError(last_status, last_message)
            if attempt + 1 < _MAX_ATTEMPTS:
                window = min(_BACKOFF_CAP, _BACKOFF_BASE * (2 ** attempt))
                self._sleep(self._rng() * window)
        raise BackendError(last_status, f"gave up after {_MAX_ATTEMPTS} attempts: "
                                        f"{last_message}")

    def _parse_response(self, response: httpx.Response, n_samples: int) -> list[str]:
        try:
            body = response.json()
            choices = body["choices"]
            texts = [c["message"]["content"] for c in choices]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise BackendError(200, f"malformed response body: {exc}") from exc
        if len(texts) < n_samples:
            raise BackendError(
                200, f"asked for {n_samples} samples, got {len(texts)}"
            )
        if isinstance(body.get("usage"), dict):
            with self._usage_lock:
                self.usage.add(body["usage"])
        return texts[:n_samples]

    def close(self) -> None:
        self._client.close()

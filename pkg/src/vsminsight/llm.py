"""Chat-completion backends.

One request dialect (OpenAI-compatible JSON over HTTP) covers every hosted
model this project targets, so the remote backend speaks exactly that. The
scripted backend replays canned responses for tests and demos; it checks
expectations against the prompt it receives, which catches prompt drift the
moment it happens. All backends are safe for concurrent use.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    AuthError,
    BackendError,
    ProviderError,
    RateLimited,
    SchemaError,
    ScriptExhausted,
    ScriptMismatch,
    TransportError,
)

log = logging.getLogger("vsminsight.llm")

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"


def estimate_tokens(text: str) -> int:
    """Deterministic stand-in when a provider reports no usage: one token
    per four UTF-8 bytes, rounded up."""
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    source: str = "estimated"  # "provider" or "estimated"

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple  # ((role, text), ...)
    temperature: float = 0.3
    max_tokens: int = 20000
    model_name: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")

    def rendered(self) -> str:
        return "\n".join(f"{role}: {text}" for role, text in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    finish_reason: str = FINISH_STOP


class ChatBackend:
    """Interface: complete(request) -> ChatResponse, plus a name for reports."""

    name = "backend"

    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


def _redacted(payload: dict) -> dict:
    """Payload copy safe for debug logs: message bodies become length markers."""
    clean = dict(payload)
    clean["messages"] = [{"role": m["role"], "content": f"<{len(m['content'])} chars>"}
                         for m in payload.get("messages", [])]
    return clean


class HttpBackend(ChatBackend):
    """OpenAI-compatible chat completions over HTTP.

    Transient failures (connection errors, 429, 5xx) are retried up to
    max_retries times with exponential backoff; auth and other client errors
    fail immediately. Credentials never reach the log.
    """

    def __init__(self, base_url: str, api_key: str = "", model: str = "",
                 timeout_s: float = 120.0, max_retries: int = 3, backoff_s: float = 0.5,
                 session=None):
        if not base_url:
            raise BackendError("no base URL configured for the HTTP backend")
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key
        self.model = model
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = session or requests.Session()
        self.name = f"http:{model or 'default'}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/chat/completions"
        payload = {
            "model": request.model_name or self.model,
            "messages": [{"role": role, "content": text} for role, text in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        log.debug("POST %s %s", url, json.dumps(_redacted(payload)))

        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(url, json=payload, headers=headers,
                                          timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = TransportError(f"request failed: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"authentication rejected ({resp.status_code})")
            if resp.status_code == 429:
                last_error = RateLimited("rate limited (429)")
                continue
            if resp.status_code >= 500:
                last_error = ProviderError(
                    f"server error {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code != 200:
                raise ProviderError(f"unexpected status {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp, request)
        raise last_error

    def _parse(self, resp, request: ChatRequest) -> ChatResponse:
        try:
            body = resp.json()
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError):
            raise ProviderError(f"malformed completion body: {resp.text[:200]}") from None
        usage_raw = body.get("usage") or {}
        if "prompt_tokens" in usage_raw and "completion_tokens" in usage_raw:
            usage = TokenUsage(int(usage_raw["prompt_tokens"]),
                               int(usage_raw["completion_tokens"]), source="provider")
        else:
            usage = TokenUsage(estimate_tokens(request.rendered()),
                               estimate_tokens(text), source="estimated")
        finish = choice.get("finish_reason", FINISH_STOP)
        if finish not in (FINISH_STOP, FINISH_LENGTH):
            finish = FINISH_ERROR if finish else FINISH_STOP
        return ChatResponse(text=text, usage=usage, finish_reason=finish)


@dataclass
class ScriptEntry:
    expect_contains: tuple
    response: str


class ScriptedBackend(ChatBackend):
    """Replays a fixed list of responses, verifying each prompt on the way.

    Every entry may pin substrings the incoming prompt must contain; a
    mismatch fails loudly instead of letting a drifted prompt march on with
    stale answers. Thread-safe; one shared cursor.
    """

    def __init__(self, entries, name: str = "scripted"):
        self.entries = list(entries)
        self.name = name
        self.calls = []  # rendered prompts, for assertions in tests
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        raw = json.loads(Path(path).read_text("utf-8"))
        if not isinstance(raw, list):
            raise SchemaError("replay script must be a JSON array")
        entries = []
        for pos, item in enumerate(raw):
            if not isinstance(item, dict) or set(item) - {"expect_contains", "response"}:
                raise SchemaError(f"script entry {pos}: unknown shape")
            if "response" not in item or not isinstance(item["response"], str):
                raise SchemaError(f"script entry {pos}: 'response' must be a string")
            needles = item.get("expect_contains", [])
            if not isinstance(needles, list) or not all(isinstance(n, str) for n in needles):
                raise SchemaError(f"script entry {pos}: 'expect_contains' must be strings")
            entries.append(ScriptEntry(expect_contains=tuple(needles), response=item["response"]))
        return cls(entries, name=f"scripted:{Path(path).name}")

    def complete(self, request: ChatRequest) -> ChatResponse:
        rendered = request.rendered()
        with self._lock:
            if self._cursor >= len(self.entries):
                raise ScriptExhausted(
                    f"script {self.name} exhausted after {len(self.entries)} calls")
            entry = self.entries[self._cursor]
            ordinal = self._cursor
            self._cursor += 1
            self.calls.append(rendered)
        for needle in entry.expect_contains:
            if needle not in rendered:
                raise ScriptMismatch(
                    f"call {ordinal}: expected prompt to contain {needle!r}")
        return ChatResponse(
            text=entry.response,
            usage=TokenUsage(estimate_tokens(rendered), estimate_tokens(entry.response),
                             source="estimated"),
            finish_reason=FINISH_STOP)


@dataclass
class StaticBackend(ChatBackend):
    """Always answers the same text; handy for trivial cases in tests."""

    text: str
    name: str = "static"
    calls: list = field(default_factory=list)

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls.append(request.rendered())
        return ChatResponse(
            text=self.text,
            usage=TokenUsage(estimate_tokens(request.rendered()),
                             estimate_tokens(self.text), source="estimated"),
            finish_reason=FINISH_STOP)


_ROLE_PREFIX = {"orchestrator": "ORCH", "subworkflow": "SUMM", "judge": "JUDGE"}


def backend_from_env(role: str) -> HttpBackend:
    """HTTP backend configured from the environment.

    Role-specific variables (ORCH_*, SUMM_*, JUDGE_*) override the shared
    LLM_* ones, so each role can bind to its own model or host.
    """
    if role not in _ROLE_PREFIX:
        raise BackendError(f"unknown backend role {role!r}")
    prefix = _ROLE_PREFIX[role]

    def lookup(suffix):
        return os.environ.get(f"{prefix}_{suffix}") or os.environ.get(f"LLM_{suffix}", "")

    base_url = lookup("BASE_URL")
    if not base_url:
        raise BackendError(
            f"no base URL for role {role!r}: set {prefix}_BASE_URL or LLM_BASE_URL")
    return HttpBackend(base_url=base_url, api_key=lookup("API_KEY"), model=lookup("MODEL"))

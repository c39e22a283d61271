"""Uniform access to chat-completion backends.

Two backends share one calling convention: a live HTTP client for any
OpenAI-compatible endpoint, and a deterministic scripted mock used by tests
and desk-scale reproductions. The gateway layers on response caching
(content-addressed files, one JSON record per call for audit), retry with
exponential backoff on transient failures, and bounded thread parallelism
that preserves submission order.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import httpx

from .artifacts import dumps_stable, load_json, sha256_text, write_json

logger = logging.getLogger(__name__)

ENV_API_BASE = "LLM_API_BASE"
ENV_API_KEY = "LLM_API_KEY"

_ROLES = ("system", "user")


class GatewayError(Exception):
    """Base class for gateway failures."""


class GatewayConfigError(GatewayError):
    """Backend misconfiguration (missing base URL, bad script, ...)."""


class BackendError(GatewayError):
    """Non-retryable backend failure."""


class TransientBackendError(GatewayError):
    """Retryable failure: timeout, HTTP 429, or HTTP 5xx."""


class RetryExhaustedError(GatewayError):
    """All retry attempts failed."""


class MockScriptError(GatewayError):
    """Mock script is malformed, exhausted, or has no rule for a request."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"message role must be one of {_ROLES}, got {self.role!r}")
        if not self.content:
            raise ValueError("message content must be nonempty")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    request_tag: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def user(
        cls,
        model_id: str,
        content: str,
        tag: str,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ) -> "ChatRequest":
        """Convenience constructor for the common single-user-turn request."""
        return cls(
            model_id=model_id,
            messages=(ChatMessage("user", content),),
            temperature=temperature,
            max_tokens=max_tokens,
            request_tag=tag,
        )

    def joined_content(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class ChatResult:
    text: str
    usage: dict | None = None
    cached: bool = False
    latency_ms: float | None = None
    raw_id: str | None = None


@dataclass(frozen=True)
class RetryPolicy:
    """Up to max_retries re-attempts with doubling backoff (1s, 2s, 4s)."""

    max_retries: int = 3
    backoff_base: float = 1.0

    def sleep_for(self, attempt: int) -> float:
        return self.backoff_base * (2**attempt)


def cache_key(backend_id: str, req: ChatRequest) -> str:
    """Content address of a call. The request tag is routing metadata and
    deliberately not part of the key."""
    payload = {
        "backend": backend_id,
        "model_id": req.model_id,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    return sha256_text(dumps_stable(payload))


class ResponseCache:
    """Content-addressed file cache; one JSON record per LLM call."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.is_file():
            return None
        return load_json(path)

    def put(self, key: str, record: dict) -> None:
        with self._lock:
            write_json(self._path(key), record)


class HttpBackend:
    """OpenAI-compatible chat completions over POST {base}/v1/chat/completions."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        base = base_url or os.environ.get(ENV_API_BASE)
        if not base:
            raise GatewayConfigError(
                f"http backend needs a base URL (flag or {ENV_API_BASE})"
            )
        self.base_url = base.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.backend_id = f"http:{self.base_url}"
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def send(self, req: ChatRequest) -> tuple[str, dict | None, str | None]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        try:
            response = self._client.post(
                f"{self.base_url}/v1/chat/completions", json=body, headers=headers
            )
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"timeout calling {self.base_url}: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"transport error: {exc}") from exc

        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(
                f"HTTP {response.status_code} from {self.base_url}"
            )
        if response.status_code < 200 or response.status_code >= 300:
            raise BackendError(
                f"HTTP {response.status_code} from {self.base_url}: {response.text[:500]}"
            )
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise BackendError("completion content is not a string")
        return text, payload.get("usage"), payload.get("id")

    def close(self) -> None:
        self._client.close()


_WS_RE = re.compile(r"\s+")


def _normalize(text: str) -> str:
    return _WS_RE.sub(" ", text).strip().casefold()


_ENTAIL_RE = re.compile(
    r"Premise:\s*(?P<premise>.*?)\s*Hypothesis:\s*(?P<hypothesis>.*?)\s*"
    r"Here is the JSON-formatted answer:",
    re.DOTALL,
)


@dataclass
class MockRule:
    """One scripted reply rule.

    Exactly one reply source is set: a static `reply`, `echo_after` (reply is
    the prompt text after the last occurrence of the marker), or
    `entail_substring` (answers the entailment prompt with 1 iff the
    normalized hypothesis occurs inside the normalized premise).
    """

    tag: str
    reply: str | None = None
    echo_after: str | None = None
    entail_substring: bool = False
    match: str | None = None
    max_uses: int | None = None
    uses: int = field(default=0, compare=False)

    def exhausted(self) -> bool:
        return self.max_uses is not None and self.uses >= self.max_uses

    def answer(self, req: ChatRequest) -> str | None:
        """Reply for this request, or None when the rule does not apply."""
        if self.exhausted():
            return None
        if self.tag not in ("*", req.request_tag):
            return None
        content = req.joined_content()
        if self.match is not None and self.match not in content:
            return None
        if self.reply is not None:
            return self.reply
        if self.echo_after is not None:
            idx = content.rfind(self.echo_after)
            if idx < 0:
                return None
            return content[idx + len(self.echo_after):].strip()
        if self.entail_substring:
            m = _ENTAIL_RE.search(content)
            if not m:
                return None
            entailed = _normalize(m.group("hypothesis")) in _normalize(m.group("premise"))
            return json.dumps({"entailment_prediction": 1 if entailed else 0})
        return None


class MockBackend:
    """Deterministic scripted backend: first applicable rule answers."""

    backend_id = "mock"

    def __init__(self, rules: Sequence[MockRule]):
        self.rules = list(rules)
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> tuple[str, dict | None, str | None]:
        with self._lock:
            for rule in self.rules:
                reply = rule.answer(req)
                if reply is not None:
                    rule.uses += 1
                    return reply, None, None
        head = req.joined_content()[:120].replace("\n", " ")
        raise MockScriptError(
            f"no mock rule matches request tag={req.request_tag!r} content={head!r}..."
        )


def _parse_rule(raw: dict, index: int) -> MockRule:
    if not isinstance(raw, dict):
        raise MockScriptError(f"rule {index}: expected an object")
    tag = raw.get("tag")
    if not tag or not isinstance(tag, str):
        raise MockScriptError(f"rule {index}: missing string 'tag'")
    sources = [k for k in ("reply", "echo_after") if raw.get(k) is not None]
    if raw.get("entail_substring"):
        sources.append("entail_substring")
    if len(sources) != 1:
        raise MockScriptError(
            f"rule {index}: exactly one of reply/echo_after/entail_substring required"
        )
    max_uses = raw.get("max_uses")
    if max_uses is not None and (not isinstance(max_uses, int) or max_uses <= 0):
        raise MockScriptError(f"rule {index}: max_uses must be a positive integer")
    return MockRule(
        tag=tag,
        reply=raw.get("reply"),
        echo_after=raw.get("echo_after"),
        entail_substring=bool(raw.get("entail_substring", False)),
        match=raw.get("match"),
        max_uses=max_uses,
    )


def load_mock_script(path: Path | str) -> MockBackend:
    """Load a mock backend from a JSON script file ({"rules": [...]})."""
    path = Path(path)
    if not path.is_file():
        raise MockScriptError(f"mock script not found: {path}")
    try:
        raw = load_json(path)
    except json.JSONDecodeError as exc:
        raise MockScriptError(f"mock script {path} is not valid JSON: {exc}") from exc
    rules = raw.get("rules") if isinstance(raw, dict) else None
    if not isinstance(rules, list) or not rules:
        raise MockScriptError(f"mock script {path} needs a nonempty 'rules' list")
    return MockBackend([_parse_rule(r, i) for i, r in enumerate(rules)])


class Gateway:
    """Backend plus cache, retries, and order-preserving bounded parallelism.

    Thread-safe: one gateway may be shared across stages. Results of
    complete_many always line up index-for-index with the submitted
    requests regardless of completion order.
    """

    def __init__(
        self,
        backend,
        cache: ResponseCache | None = None,
        parallelism: int = 4,
        retry: RetryPolicy | None = None,
    ):
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.backend = backend
        self.cache = cache
        self.parallelism = parallelism
        self.retry = retry or RetryPolicy()

    def complete(self, req: ChatRequest, use_cache: bool = True) -> ChatResult:
        """One completion. Cache hits return the stored reply byte-identically.

        With use_cache=False the call bypasses the cache entirely (no read,
        no write); parse-failure retries use this so a rerun replays the
        same backend traffic instead of laundering a second reply through
        the first call's key.
        """
        key = cache_key(self.backend.backend_id, req)
        if use_cache and self.cache is not None:
            record = self.cache.get(key)
            if record is not None:
                return ChatResult(
                    text=record["reply"],
                    usage=record.get("usage"),
                    cached=True,
                    raw_id=record.get("raw_id"),
                )

        last_error: Exception | None = None
        start = time.monotonic()
        for attempt in range(self.retry.max_retries + 1):
            try:
                text, usage, raw_id = self.backend.send(req)
                break
            except TransientBackendError as exc:
                last_error = exc
                if attempt >= self.retry.max_retries:
                    raise RetryExhaustedError(
                        f"{attempt + 1} attempts failed; last error: {exc}"
                    ) from exc
                delay = self.retry.sleep_for(attempt)
                logger.warning(
                    "transient backend error (attempt %d/%d), retrying in %.1fs: %s",
                    attempt + 1,
                    self.retry.max_retries + 1,
                    delay,
                    exc,
                )
                time.sleep(delay)
        else:  # pragma: no cover - loop always breaks or raises
            raise RetryExhaustedError(str(last_error))
        latency_ms = (time.monotonic() - start) * 1000.0

        if use_cache and self.cache is not None:
            self.cache.put(
                key,
                {
                    "key": key,
                    "backend": self.backend.backend_id,
                    "request": {
                        "model_id": req.model_id,
                        "messages": [
                            {"role": m.role, "content": m.content} for m in req.messages
                        ],
                        "temperature": req.temperature,
                        "max_tokens": req.max_tokens,
                        "request_tag": req.request_tag,
                    },
                    "reply": text,
                    "usage": usage,
                    "raw_id": raw_id,
                },
            )
        return ChatResult(text=text, usage=usage, cached=False, latency_ms=latency_ms, raw_id=raw_id)

    def complete_many(
        self, requests: Iterable[ChatRequest], use_cache: bool = True
    ) -> list[ChatResult]:
        """Complete a batch concurrently; results are in request order."""
        reqs = list(requests)
        if not reqs:
            return []
        if self.parallelism == 1 or len(reqs) == 1:
            return [self.complete(r, use_cache=use_cache) for r in reqs]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(lambda r: self.complete(r, use_cache=use_cache), reqs))

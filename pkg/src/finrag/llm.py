"""Chat-completion backends: OpenAI-compatible remote, scripted mock, disk cache.

The scripted mock replays canned responses from a JSON file of
``{"pattern": <regex>, "response": ...}`` or ``{"exact": <string>,
"response": ...}`` entries, first match wins in file order.  It is the
deterministic stand-in for the hosted models in every offline test.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import requests

from finrag.errors import ConfigError, ParseError, RequestError, TransportError
from finrag.tokens import ApproxTokenCounter


_approx = ApproxTokenCounter()


@dataclass(frozen=True)
class ChatRequest:
    user_prompt: str
    system_prompt: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 1024
    model_name: str = "default"

    def __post_init__(self):
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be > 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def chat(backend: ChatBackend, request: ChatRequest) -> ChatResponse:
    """Send one chat request through the given backend."""
    return backend.complete(request)


def _default_post(url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, dict]:
    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text}
    return resp.status_code, body


class OpenAIChatBackend:
    """Remote backend speaking the OpenAI chat-completions wire format.

    Retries timeouts, 5xx and 429 with exponential backoff (1s, 2s, 4s,
    ...); any other 4xx raises immediately.  ``post`` and ``sleep`` are
    injectable so tests can script failures without a network or real
    delays; ``on_retry(attempt, delay, reason)`` observes the schedule.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        *,
        base_url_env: str = "OPENAI_BASE_URL",
        api_key_env: str = "OPENAI_API_KEY",
        attempts: int = 3,
        timeout: float = 60.0,
        max_concurrency: int = 4,
        post: Callable[[str, dict, dict, float], tuple[int, dict]] = _default_post,
        sleep: Callable[[float], None] = time.sleep,
        on_retry: Callable[[int, float, str], None] | None = None,
    ):
        self.base_url = (base_url or os.environ.get(base_url_env, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        if not self.base_url:
            raise ConfigError(f"no chat base URL: pass base_url or set ${base_url_env}")
        self.attempts = attempts
        self.timeout = timeout
        self._post = post
        self._sleep = sleep
        self._on_retry = on_retry
        self._gate = threading.BoundedSemaphore(max_concurrency)

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        payload = {
            "model": request.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

        with self._gate:
            last_reason = "no attempt made"
            for attempt in range(1, self.attempts + 1):
                try:
                    status, body = self._post(url, headers, payload, self.timeout)
                except (requests.RequestException, OSError) as e:
                    last_reason = f"transport failure: {e}"
                else:
                    if 200 <= status < 300:
                        return self._parse_body(body)
                    if status == 429 or status >= 500:
                        last_reason = f"HTTP {status}"
                    else:
                        raise RequestError(f"chat backend rejected request: HTTP {status}: {body}")
                if attempt < self.attempts:
                    delay = float(2 ** (attempt - 1))
                    if self._on_retry is not None:
                        self._on_retry(attempt, delay, last_reason)
                    self._sleep(delay)
            raise TransportError(f"chat backend failed after {self.attempts} attempts: {last_reason}")

    @staticmethod
    def _parse_body(body: dict) -> ChatResponse:
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            raise TransportError(f"malformed chat completion response: {e}") from e
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )


class ScriptedChatBackend:
    """Deterministic mock: replays responses matched from a script file."""

    def __init__(
        self,
        entries: list[tuple[str, str, str]],
        fallback: str | None = None,
    ):
        # entries: (kind, needle, response) with kind in {"exact", "pattern"}
        self._entries: list[tuple[str, re.Pattern | str, str]] = []
        for kind, needle, response in entries:
            if kind == "pattern":
                try:
                    self._entries.append(("pattern", re.compile(needle, re.DOTALL), response))
                except re.error as e:
                    raise ParseError(f"invalid mock pattern {needle!r}: {e}") from e
            else:
                self._entries.append(("exact", needle, response))
        self.fallback = fallback

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = self._match(request.user_prompt)
        if text is None:
            if self.fallback is None:
                raise TransportError(f"scripted backend has no entry matching prompt: {request.user_prompt[:120]!r}")
            text = self.fallback
        return ChatResponse(
            text=text,
            prompt_tokens=_approx.count(request.system_prompt) + _approx.count(request.user_prompt),
            completion_tokens=_approx.count(text),
        )

    def _match(self, prompt: str) -> str | None:
        for kind, needle, response in self._entries:
            if kind == "exact":
                if prompt == needle:
                    return response
            elif needle.search(prompt):
                return response
        return None


_UNSET = object()


def mock_from_script(path: str | Path, fallback=_UNSET) -> ScriptedChatBackend:
    """Build a scripted backend from a JSON script file.

    The file is either an array of entries or an object
    ``{"entries": [...], "fallback": "..."}``; a ``fallback`` argument
    overrides the file.  Without a fallback, unmatched prompts error.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: malformed mock script: {e}") from e
    file_fallback = None
    if isinstance(raw, dict):
        file_fallback = raw.get("fallback")
        raw_entries = raw.get("entries", [])
    else:
        raw_entries = raw
    entries: list[tuple[str, str, str]] = []
    for i, entry in enumerate(raw_entries):
        if not isinstance(entry, dict) or "response" not in entry:
            raise ParseError(f"{path}: entry {i} must be an object with a 'response'")
        if "exact" in entry:
            entries.append(("exact", str(entry["exact"]), str(entry["response"])))
        elif "pattern" in entry:
            entries.append(("pattern", str(entry["pattern"]), str(entry["response"])))
        else:
            raise ParseError(f"{path}: entry {i} needs an 'exact' or 'pattern' key")
    chosen = file_fallback if fallback is _UNSET else fallback
    return ScriptedChatBackend(entries, fallback=chosen)


class CachedChatBackend:
    """Disk cache around any chat backend.

    Keys on (version, model name, prompt hash) so repeated ablation runs
    reuse model outputs; one file per key under ``cache_dir``.
    """

    def __init__(self, backend: ChatBackend, cache_dir: str | Path, version: str = "v1"):
        self._backend = backend
        self._dir = Path(cache_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._version = version

    def _key(self, request: ChatRequest) -> Path:
        h = hashlib.sha256()
        for part in (self._version, request.model_name, request.system_prompt, request.user_prompt):
            h.update(part.encode("utf-8"))
            h.update(b"\x00")
        return self._dir / f"{h.hexdigest()}.txt"

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = self._key(request)
        if key.exists():
            text = key.read_text(encoding="utf-8")
            return ChatResponse(
                text=text,
                prompt_tokens=_approx.count(request.system_prompt) + _approx.count(request.user_prompt),
                completion_tokens=_approx.count(text),
            )
        response = self._backend.complete(request)
        tmp = key.with_suffix(".tmp")
        tmp.write_text(response.text, encoding="utf-8")
        tmp.replace(key)
        return response

"""LM backends: an OpenAI-compatible HTTP client plus offline doubles.

Every backend exposes ``chat(messages) -> BackendReply`` and a
``model_id``. The offline doubles (replay fixtures and rule agents) are
fully deterministic so sessions can be tested and replayed without any
endpoint.
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import requests

from .script.ast import quote_string
from .util import estimate_tokens

VALID_ROLES = ("system", "user", "assistant", "tool")

DEFAULT_TIMEOUT_S = 600.0  # long-context queries are routinely minutes-long


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")
        if not self.content and self.role != "assistant":
            raise ValueError("only assistant placeholders may be empty")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class BackendReply:
    text: str
    usage: TokenUsage
    latency_ms: float
    estimated: bool = False  # usage was heuristic, not provider-reported

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency must be non-negative")


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_id: str
    api_key_env: str           # variable *name*; the key itself is never stored
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_retries: int = 3
    temperature: float | None = None
    extra_params: dict = field(default_factory=dict)


class BackendError(Exception):
    pass


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class TransportError(BackendError):
    pass


class RequestTimeout(BackendError):
    pass


class ProviderError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class FixtureExhausted(BackendError):
    pass


# Throttles concurrent outbound requests across all HTTP backends.
_request_gate = threading.BoundedSemaphore(4)


def set_request_cap(limit: int) -> None:
    """Replace the global concurrent-request cap (default 4)."""
    global _request_gate
    if limit < 1:
        raise ValueError("request cap must be at least 1")
    _request_gate = threading.BoundedSemaphore(limit)


def _estimate_usage(messages: Sequence[ChatMessage], reply_text: str) -> TokenUsage:
    sent = sum(estimate_tokens(m.content) for m in messages)
    return TokenUsage(sent, estimate_tokens(reply_text))


class HttpBackend:
    """Chat-completions client for OpenAI-compatible endpoints.

    POSTs ``{base_url}/chat/completions`` with a bearer key read from the
    configured environment variable at call time. 429 responses retry
    with exponential backoff up to ``max_retries``; other failures map to
    typed errors for the session trace.
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self.model_id = config.model_id

    def chat(self, messages: Sequence[ChatMessage]) -> BackendReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        cfg = self.config
        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise AuthError(f"environment variable {cfg.api_key_env} is not set")

        body: dict = {
            "model": cfg.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        if cfg.temperature is not None:
            body["temperature"] = cfg.temperature
        body.update(cfg.extra_params)

        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {key}",
        }

        attempt = 0
        started = time.monotonic()
        while True:
            try:
                with _request_gate:
                    response = requests.post(
                        url, json=body, headers=headers, timeout=cfg.timeout_s
                    )
            except requests.Timeout as exc:
                raise RequestTimeout(f"no response within {cfg.timeout_s}s") from exc
            except requests.RequestException as exc:
                raise TransportError(str(exc)) from exc

            if response.status_code == 429:
                if attempt >= cfg.max_retries:
                    raise RateLimited(f"still rate-limited after {attempt} retries")
                time.sleep(min(0.5 * 2**attempt, 30.0))
                attempt += 1
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"HTTP {response.status_code}: {response.text[:300]}")
            if not (200 <= response.status_code < 300):
                raise ProviderError(response.status_code, response.text)
            break
        latency_ms = (time.monotonic() - started) * 1000.0

        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(response.status_code, response.text) from exc

        usage_obj = data.get("usage") or {}
        in_tokens = usage_obj.get("prompt_tokens")
        out_tokens = usage_obj.get("completion_tokens")
        estimated = in_tokens is None or out_tokens is None
        if estimated:
            fallback = _estimate_usage(messages, text)
            in_tokens = fallback.input_tokens if in_tokens is None else in_tokens
            out_tokens = fallback.output_tokens if out_tokens is None else out_tokens
        return BackendReply(
            text=text,
            usage=TokenUsage(int(in_tokens), int(out_tokens)),
            latency_ms=latency_ms,
            estimated=estimated,
        )


class ReplayBackend:
    """Replays an ordered fixture of responses; no network, ever.

    One fixture entry is consumed per chat call, in order, shared across
    whatever sessions use the backend. Running past the end raises
    :class:`FixtureExhausted`.
    """

    def __init__(self, replies: Sequence[BackendReply], model_id: str = "replay"):
        self._replies = list(replies)
        self._next = 0
        self._lock = threading.Lock()
        self.model_id = model_id

    @classmethod
    def from_jsonl(cls, path: str | Path, model_id: str = "replay") -> "ReplayBackend":
        replies = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                replies.append(
                    BackendReply(
                        text=obj["text"],
                        usage=TokenUsage(
                            int(obj.get("input_tokens", 0)),
                            int(obj.get("output_tokens", 0)),
                        ),
                        latency_ms=float(obj.get("latency_ms", 0.0)),
                        estimated=bool(obj.get("estimated", False)),
                    )
                )
        return cls(replies, model_id=model_id)

    def chat(self, messages: Sequence[ChatMessage]) -> BackendReply:
        with self._lock:
            if self._next >= len(self._replies):
                raise FixtureExhausted(
                    f"fixture has {len(self._replies)} replies; call {self._next + 1} requested"
                )
            reply = self._replies[self._next]
            self._next += 1
        return reply


# Findall pattern (script subset) for the planted needle sentences
# produced by the synthetic haystack generator.
NEEDLE_PATTERN = (
    "The special magic number for [a-z]+ is "
    "[0-9][0-9][0-9][0-9][0-9][0-9][0-9]"
)

_NEEDLE_RE = re.compile(r"The special magic number for ([a-z]+) is (\d{7})")
_DIGITS_RE = re.compile(r"\d{7,}")

RULE_STRATEGIES = ("grep-needle", "infinite-loop", "delegate-k", "needle-answer")


def _fenced(script: str) -> str:
    return f"```repl\n{script}\n```"


def _last_content(messages: Sequence[ChatMessage], role: str) -> str | None:
    for m in reversed(messages):
        if m.role == role:
            return m.content
    return None


def _repl_mode(messages: Sequence[ChatMessage]) -> bool:
    # REPL sessions always open with the system template; plain calls
    # (depth 0, leaf subcalls) carry only user/tool content.
    return any(m.role == "system" for m in messages)


class RuleAgentBackend:
    """Deterministic scripted agent; behavior is a pure function of the
    conversation, so one instance is safe across concurrent sessions.

    Strategies:
      grep-needle    search the stored prompt for a needle pattern, then
                     answer FINAL with the digits found in the transcript
      infinite-loop  emit a fresh probe script forever, never FINAL
      delegate-k     fan out k llm() subcalls, then FINAL the first reply
      needle-answer  answer a needle question directly from the message
                     text (the plain-call counterpart of grep-needle)
    """

    def __init__(self, strategy: str, params: dict | None = None):
        if strategy not in RULE_STRATEGIES:
            raise ValueError(f"unknown rule strategy {strategy!r}")
        self.strategy = strategy
        self.params = dict(params or {})
        if strategy == "delegate-k" and int(self.params.get("k", 1)) < 1:
            raise ValueError("delegate-k needs k >= 1")
        self.model_id = f"rule:{strategy}"

    def chat(self, messages: Sequence[ChatMessage]) -> BackendReply:
        text = self._respond(messages)
        return BackendReply(
            text=text,
            usage=_estimate_usage(messages, text),
            latency_ms=0.0,
            estimated=True,
        )

    def _respond(self, messages: Sequence[ChatMessage]) -> str:
        if self.strategy == "grep-needle":
            return self._grep_needle(messages)
        if self.strategy == "infinite-loop":
            if _repl_mode(messages):
                return "Let me look around first.\n\n" + _fenced(
                    'glimpse = peek(prompt, 80)\nprint(glimpse)'
                )
            return "Still looking."
        if self.strategy == "delegate-k":
            return self._delegate(messages)
        return self._needle_answer(messages)

    def _grep_needle(self, messages: Sequence[ChatMessage]) -> str:
        if not _repl_mode(messages):
            return self._needle_answer(messages)
        transcript = _last_content(messages, "tool")
        if transcript is None:
            pattern = self.params.get("pattern", NEEDLE_PATTERN)
            script = f"hits = findall(prompt, {quote_string(pattern)})\nprint(hits)"
            return "Scanning the stored text for the needle.\n\n" + _fenced(script)
        m = _DIGITS_RE.search(transcript)
        value = m.group(0) if m else ""
        return f'The needle is located. FINAL("{value}")'

    def _delegate(self, messages: Sequence[ChatMessage]) -> str:
        if not _repl_mode(messages):
            return "Delegated part reviewed; nothing further to report."
        k = int(self.params.get("k", 1))
        lines = [
            f'part{i} = llm("Report item {i} of the stored text.")'
            for i in range(1, k + 1)
        ]
        lines.append("FINAL(part1)")
        return "Splitting the work into sub-queries.\n\n" + _fenced("\n".join(lines))

    def _needle_answer(self, messages: Sequence[ChatMessage]) -> str:
        source = _last_content(messages, "user") or ""
        m = _NEEDLE_RE.search(source)
        if m is None:
            if _repl_mode(messages):
                return 'FINAL("")'
            return "I could not find the magic number."
        value = m.group(2)
        if _repl_mode(messages):
            return f'FINAL("{value}")'
        return f"Answer: {value}"


def make_mock_backend(script: dict):
    """Build a deterministic backend from a mock spec.

    ``{"kind": "replay", "path": ...}`` or ``{"kind": "replay",
    "replies": [...]}`` gives a fixture replayer; ``{"kind": "rule",
    "strategy": ..., "params": {...}}`` gives a rule agent.
    """
    kind = script.get("kind")
    if kind == "replay":
        model_id = script.get("model_id", "replay")
        if "path" in script:
            return ReplayBackend.from_jsonl(script["path"], model_id=model_id)
        replies = [
            r
            if isinstance(r, BackendReply)
            else BackendReply(
                text=r["text"],
                usage=TokenUsage(
                    int(r.get("input_tokens", 0)), int(r.get("output_tokens", 0))
                ),
                latency_ms=float(r.get("latency_ms", 0.0)),
                estimated=bool(r.get("estimated", False)),
            )
            for r in script.get("replies", [])
        ]
        return ReplayBackend(replies, model_id=model_id)
    if kind == "rule":
        return RuleAgentBackend(script["strategy"], script.get("params"))
    raise ValueError(f"unknown mock backend kind {kind!r}")

"""The session loop: iterate, call the model, parse, execute, recurse.

A session with recursion depth 0 is a single plain model call. With
depth d >= 1 the session owns a REPL whose ``llm`` hook runs plain calls
at d == 1 and full nested sessions (with their own REPL) at d >= 2.
Every backend call, script execution, subcall spawn, and termination in
the whole tree is appended to one shared trace.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources

from .backends import BackendError, ChatMessage, TokenUsage
from .parsing import find_code_blocks, find_final_answer, strip_think_tags
from .script import (
    Environment,
    HaltExecution,
    ParseError,
    SandboxLimits,
    execute,
    parse_script,
    render_value,
)
from .util import digest, preview, sha256_hex

TERMINATIONS = ("final", "iterations_exhausted", "token_ceiling", "backend_error")

# How nested sessions frame the text handed to llm(); fixed so runs stay
# comparable across configurations.
SUBCALL_TASK = "Answer the question contained in `prompt`."

_NO_BLOCK_FEEDBACK = "No code block or FINAL marker found."


def default_system_template() -> str:
    return (
        resources.files("rlm_forge.templates")
        .joinpath("repl_system_v1.txt")
        .read_text(encoding="utf-8")
    )


def template_hash(template: str) -> str:
    return sha256_hex(template)


@dataclass(frozen=True)
class RecursionBudget:
    depth: int = 1

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")


@dataclass
class SessionConfig:
    budget: RecursionBudget = field(default_factory=RecursionBudget)
    max_iterations: int = 30
    transcript_truncate: int = 8192
    sandbox: SandboxLimits = field(default_factory=SandboxLimits)
    system_template: str = ""          # empty -> packaged default
    token_ceiling: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.transcript_truncate < 128:
            raise ValueError("transcript_truncate must be >= 128")
        if not self.system_template:
            self.system_template = default_system_template()


@dataclass
class TraceEvent:
    timestamp: str     # wall-clock ISO-8601; informational only
    session_path: str  # "root", "root.3" for its 3rd subcall, ...
    kind: str          # backend_call | script_exec | subcall_spawn | termination
    payload: dict

    def to_json_obj(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "session_path": self.session_path,
            "kind": self.kind,
            "payload": self.payload,
        }


@dataclass
class SessionResult:
    answer: str | None
    termination: str
    trace: list[TraceEvent]
    totals: TokenUsage
    wall_time_ms: float
    max_observed_depth: int


class _SharedState:
    """Trace, token totals, and the tree-wide ceiling for one run."""

    def __init__(self, token_ceiling: int | None):
        self.trace: list[TraceEvent] = []
        self.totals = TokenUsage(0, 0)
        self.token_ceiling = token_ceiling

    def record(self, path: str, kind: str, payload: dict) -> None:
        self.trace.append(
            TraceEvent(
                timestamp=datetime.now(timezone.utc).isoformat(),
                session_path=path,
                kind=kind,
                payload=payload,
            )
        )

    def add_usage(self, usage: TokenUsage) -> None:
        self.totals = self.totals + usage

    def ceiling_hit(self) -> bool:
        return (
            self.token_ceiling is not None and self.totals.total >= self.token_ceiling
        )


def _truncate(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    removed = len(text) - limit
    return text[:limit] + f"...[truncated {removed} chars]"


def _chat(state: _SharedState, path: str, backend, messages):
    reply = backend.chat(messages)
    state.add_usage(reply.usage)
    state.record(
        path,
        "backend_call",
        {
            "model": getattr(backend, "model_id", "unknown"),
            "input_tokens": reply.usage.input_tokens,
            "output_tokens": reply.usage.output_tokens,
            "estimated": reply.estimated,
            "latency_ms": reply.latency_ms,
            "request_digest": digest("\n".join(m.content for m in messages)),
            "response_digest": digest(reply.text),
            "response_preview": preview(reply.text),
        },
    )
    return reply


class _Session:
    def __init__(
        self,
        task: str,
        context: str,
        depth: int,
        path: str,
        config: SessionConfig,
        backend,
        state: _SharedState,
    ):
        self.task = task
        self.context = context
        self.depth = depth
        self.path = path
        self.config = config
        self.backend = backend
        self.state = state
        self.subcalls_used = 0
        self.child_observed = 0  # deepest REPL nesting among nested sessions

    def observed_depth(self) -> int:
        if self.depth == 0:
            return 0
        return max(1, 1 + self.child_observed)

    def _terminate(self, reason: str, answer: str | None) -> tuple[str | None, str]:
        self.state.record(
            self.path,
            "termination",
            {"reason": reason, "answer_present": answer is not None},
        )
        return answer, reason

    def run(self) -> tuple[str | None, str]:
        if self.depth == 0:
            return self._run_plain()
        return self._run_repl()

    def _run_plain(self) -> tuple[str | None, str]:
        content = self.task + "\n\n" + self.context if self.context else self.task
        messages = [ChatMessage("user", content)]
        try:
            reply = _chat(self.state, self.path, self.backend, messages)
        except BackendError as exc:
            self.state.record(
                self.path,
                "backend_call",
                {"error": type(exc).__name__, "message": str(exc)},
            )
            return self._terminate("backend_error", None)
        answer = strip_think_tags(reply.text).strip()
        return self._terminate("final", answer)

    def _run_repl(self) -> tuple[str | None, str]:
        env = Environment(self.context, self.config.sandbox)
        messages = [
            ChatMessage("system", self.config.system_template),
            ChatMessage("user", self.task),
        ]
        for _ in range(self.config.max_iterations):
            if self.state.ceiling_hit():
                return self._terminate("token_ceiling", None)
            try:
                reply = _chat(self.state, self.path, self.backend, messages)
            except BackendError as exc:
                self.state.record(
                    self.path,
                    "backend_call",
                    {"error": type(exc).__name__, "message": str(exc)},
                )
                return self._terminate("backend_error", None)

            messages.append(ChatMessage("assistant", reply.text))
            clean = strip_think_tags(reply.text)

            # A plain-text marker expresses intent to stop; it wins over
            # any code blocks in the same response.
            marker = find_final_answer(clean)
            if marker is not None:
                if marker.kind == "final":
                    answer = marker.payload
                else:
                    bound = env.bindings.get(marker.payload)
                    if bound is None:
                        answer = f"ERROR: undefined variable {marker.payload}"
                    else:
                        answer = render_value(bound)
                return self._terminate("final", answer)

            blocks = find_code_blocks(clean)
            if not blocks:
                messages.append(ChatMessage("tool", _NO_BLOCK_FEEDBACK))
                continue

            transcripts: list[str] = []
            final_answer: str | None = None
            for source in blocks:
                try:
                    program = parse_script(source)
                except ParseError as exc:
                    self.state.record(
                        self.path,
                        "script_exec",
                        {"source_digest": digest(source), "parse_error": str(exc)},
                    )
                    transcripts.append(f"ERROR: parse error at {exc}")
                    continue
                outcome = execute(
                    program, env, self.config.sandbox, self._subcall_hook
                )
                self.state.record(
                    self.path,
                    "script_exec",
                    {
                        "source_digest": digest(source),
                        "steps_used": outcome.steps_used,
                        "subcalls_made": outcome.subcalls_made,
                        "budget_stop": outcome.budget_stop,
                        "final": outcome.final is not None,
                        "transcript": _truncate(outcome.transcript, 2000),
                    },
                )
                if outcome.transcript:
                    transcripts.append(outcome.transcript)
                if outcome.final is not None:
                    final_answer = outcome.final.value
                    break
            if final_answer is not None:
                return self._terminate("final", final_answer)

            joined = "\n".join(transcripts) if transcripts else "(no output)"
            messages.append(
                ChatMessage("tool", _truncate(joined, self.config.transcript_truncate))
            )
        return self._terminate("iterations_exhausted", None)

    # -- recursion -----------------------------------------------------

    def _subcall_hook(self, text: str) -> str:
        if self.subcalls_used >= self.config.sandbox.max_subcalls:
            raise HaltExecution(
                f"subcall budget exhausted ({self.config.sandbox.max_subcalls} per session)"
            )
        if self.state.ceiling_hit():
            raise HaltExecution("token ceiling reached")
        self.subcalls_used += 1
        child_path = f"{self.path}.{self.subcalls_used}"
        child_depth = self.depth - 1
        self.state.record(
            self.path,
            "subcall_spawn",
            {"child_path": child_path, "depth": child_depth, "text_digest": digest(text)},
        )
        if child_depth == 0:
            return self._plain_subcall(child_path, text)
        child = _Session(
            task=SUBCALL_TASK,
            context=text,
            depth=child_depth,
            path=child_path,
            config=self.config,
            backend=self.backend,
            state=self.state,
        )
        answer, termination = child.run()
        self.child_observed = max(self.child_observed, child.observed_depth())
        if termination == "final" and answer is not None:
            return answer
        return f"ERROR: subcall failed ({termination})"

    def _plain_subcall(self, child_path: str, text: str) -> str:
        messages = [ChatMessage("user", text)]
        try:
            reply = _chat(self.state, child_path, self.backend, messages)
        except BackendError as exc:
            self.state.record(
                child_path,
                "backend_call",
                {"error": type(exc).__name__, "message": str(exc)},
            )
            self.state.record(
                child_path,
                "termination",
                {"reason": "backend_error", "answer_present": False},
            )
            return "ERROR: subcall failed (backend_error)"
        self.state.record(
            child_path, "termination", {"reason": "final", "answer_present": True}
        )
        return strip_think_tags(reply.text).strip()


def run_session(
    task: str,
    context: str,
    config: SessionConfig | None = None,
    backend=None,
) -> SessionResult:
    """Run one recursive session and return its full result.

    Backend failures (after the client's own retries) terminate the
    session with ``backend_error`` rather than raising, so a benchmark
    run never loses the whole batch to one bad sample.
    """
    if backend is None:
        raise ValueError("a backend is required")
    cfg = config or SessionConfig()
    state = _SharedState(cfg.token_ceiling)
    started = time.monotonic()
    session = _Session(
        task=task,
        context=context,
        depth=cfg.budget.depth,
        path="root",
        config=cfg,
        backend=backend,
        state=state,
    )
    answer, termination = session.run()
    return SessionResult(
        answer=answer,
        termination=termination,
        trace=state.trace,
        totals=state.totals,
        wall_time_ms=(time.monotonic() - started) * 1000.0,
        max_observed_depth=session.observed_depth(),
    )

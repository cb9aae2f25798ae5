"""Sandboxed execution of parsed scripts.

The environment holds the long input under the reserved name ``prompt``
and persists across executions within one session. Values are plain
Python ``str`` (text), ``int``, and ``list[str]``.

Execution is forgiving by design: logic errors written by the model
(bad index, unknown variable, invalid pattern) become ``ERROR: ...``
transcript lines and the next statement still runs. Only resource caps
stop an execution early, and the stop reason is recorded on the outcome
instead of raised. Scripts cannot touch files, sockets, or the clock;
the single external effect is the ``llm`` subcall hook.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .ast import (
    Assignment,
    Call,
    Concat,
    Expr,
    Final,
    FinalVar,
    IntLit,
    Print,
    ScriptProgram,
    Slice,
    StringLit,
    Var,
    quote_string,
)
from .patterns import PatternError, compile_pattern

Value = Union[str, int, list]

SubcallHook = Callable[[str], str]


@dataclass(frozen=True)
class SandboxLimits:
    max_steps: int = 10_000          # statements per execution
    max_value_bytes: int = 16 * 2**20
    max_env_bytes: int = 256 * 2**20
    max_list_items: int = 100_000
    max_subcalls: int = 50           # per session; enforced by the subcall hook


@dataclass(frozen=True)
class FinalSignal:
    value: str


@dataclass
class ExecOutcome:
    transcript: str
    final: FinalSignal | None
    steps_used: int
    subcalls_made: int
    budget_stop: str | None = None   # set when a resource cap ended the run


class ScriptRuntimeError(Exception):
    """Model-authored logic error; becomes a transcript line."""


class HaltExecution(Exception):
    """Raised by the subcall hook to stop the current execution.

    Used for session-level budgets (subcall cap, token ceiling): the
    message lands in the transcript and on ``ExecOutcome.budget_stop``,
    and the session decides how to continue.
    """


class _BudgetViolation(Exception):
    pass


def render_value(value: Value) -> str:
    """Stringify a value the way ``print`` and FINAL display it."""
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return "[" + ", ".join(quote_string(item) for item in value) + "]"


def _type_name(value: Value) -> str:
    if isinstance(value, str):
        return "text"
    if isinstance(value, int):
        return "number"
    return "list"


def _utf8_size(value: Value) -> int:
    if isinstance(value, str):
        return len(value.encode("utf-8"))
    if isinstance(value, int):
        return 8
    return sum(len(item.encode("utf-8")) for item in value) + 8 * len(value)


class Environment:
    """Name → value bindings, persistent across executions in a session."""

    def __init__(self, prompt: str, limits: SandboxLimits | None = None):
        self.limits = limits or SandboxLimits()
        if len(prompt.encode("utf-8")) > self.limits.max_value_bytes:
            raise ValueError(
                f"prompt exceeds the per-value cap of {self.limits.max_value_bytes} bytes"
            )
        self.bindings: dict[str, Value] = {}
        self._sizes: dict[str, int] = {}
        self._total_bytes = 0
        self._bind_checked("prompt", prompt)

    @property
    def total_bytes(self) -> int:
        return self._total_bytes

    def get(self, name: str) -> Value:
        try:
            return self.bindings[name]
        except KeyError:
            raise ScriptRuntimeError(f"undefined variable {name}") from None

    def _bind_checked(self, name: str, value: Value) -> None:
        size = _utf8_size(value)
        new_total = self._total_bytes - self._sizes.get(name, 0) + size
        if new_total > self.limits.max_env_bytes:
            raise _BudgetViolation(
                f"environment cap exceeded ({new_total} > {self.limits.max_env_bytes} bytes)"
            )
        self.bindings[name] = value
        self._sizes[name] = size
        self._total_bytes = new_total


def _checked_text(text: str, limits: SandboxLimits) -> str:
    # 4 bytes/code point bounds UTF-8, so small strings skip the encode
    if len(text) * 4 > limits.max_value_bytes:
        if len(text.encode("utf-8")) > limits.max_value_bytes:
            raise _BudgetViolation(
                f"text value exceeds the {limits.max_value_bytes} byte cap"
            )
    return text


def _checked_list(items: list, limits: SandboxLimits) -> list:
    if len(items) > limits.max_list_items:
        raise _BudgetViolation(
            f"list exceeds the {limits.max_list_items} element cap"
        )
    return items


def _want_text(value: Value, fn: str, what: str = "text") -> str:
    if not isinstance(value, str):
        raise ScriptRuntimeError(f"{fn}() expects {what}, got {_type_name(value)}")
    return value


def _want_int(value: Value, fn: str) -> int:
    if not isinstance(value, int):
        raise ScriptRuntimeError(f"{fn}() expects a number, got {_type_name(value)}")
    return value


def _want_list(value: Value, fn: str) -> list:
    if not isinstance(value, list):
        raise ScriptRuntimeError(f"{fn}() expects a list, got {_type_name(value)}")
    return value


def _search_pattern(fn: str, pattern: str):
    try:
        return compile_pattern(pattern)
    except PatternError as exc:
        raise ScriptRuntimeError(f"{fn}(): invalid pattern: {exc}") from exc


class _Execution:
    def __init__(
        self,
        env: Environment,
        limits: SandboxLimits,
        subcall: SubcallHook | None,
    ):
        self.env = env
        self.limits = limits
        self.subcall = subcall
        self.entries: list[str] = []
        self.steps_used = 0
        self.subcalls_made = 0
        self.final: FinalSignal | None = None
        self.budget_stop: str | None = None

    # -- builtins ------------------------------------------------------

    def _call(self, fn: str, args: list[Value]) -> Value:
        def arity(n: int) -> None:
            if len(args) != n:
                raise ScriptRuntimeError(
                    f"{fn}() takes {n} argument{'s' if n != 1 else ''}, got {len(args)}"
                )

        if fn == "len":
            arity(1)
            if isinstance(args[0], (str, list)):
                return len(args[0])
            raise ScriptRuntimeError("len() expects text or a list, got number")
        if fn == "find":
            arity(2)
            text = _want_text(args[0], fn)
            rx = _search_pattern(fn, _want_text(args[1], fn, "a text pattern"))
            m = rx.search(text)
            return m.start() if m else -1
        if fn == "findall":
            arity(2)
            text = _want_text(args[0], fn)
            rx = _search_pattern(fn, _want_text(args[1], fn, "a text pattern"))
            hits = [m.group(0) for m in rx.finditer(text)]
            return _checked_list(hits, self.limits)
        if fn == "count":
            arity(2)
            text = _want_text(args[0], fn)
            rx = _search_pattern(fn, _want_text(args[1], fn, "a text pattern"))
            return sum(1 for _ in rx.finditer(text))
        if fn == "split":
            arity(2)
            text = _want_text(args[0], fn)
            sep = _want_text(args[1], fn, "a literal separator")
            if sep == "":
                raise ScriptRuntimeError("split() separator must be non-empty")
            return _checked_list(text.split(sep), self.limits)
        if fn == "lines":
            arity(1)
            return _checked_list(_want_text(args[0], fn).split("\n"), self.limits)
        if fn == "join":
            arity(2)
            items = _want_list(args[0], fn)
            sep = _want_text(args[1], fn, "a separator")
            return _checked_text(sep.join(items), self.limits)
        if fn == "get":
            arity(2)
            items = _want_list(args[0], fn)
            index = _want_int(args[1], fn)
            if index < 0 or index >= len(items):
                raise ScriptRuntimeError("index out of range")
            return items[index]
        if fn == "chunk":
            arity(2)
            text = _want_text(args[0], fn)
            size = _want_int(args[1], fn)
            if size < 1:
                raise ScriptRuntimeError("chunk() size must be at least 1")
            pieces = [text[i : i + size] for i in range(0, len(text), size)]
            return _checked_list(pieces, self.limits)
        if fn == "lower":
            arity(1)
            return _want_text(args[0], fn).lower()
        if fn == "strip":
            arity(1)
            return _want_text(args[0], fn).strip()
        if fn == "peek":
            arity(2)
            text = _want_text(args[0], fn)
            n = _want_int(args[1], fn)
            return text[: max(0, n)]
        if fn == "llm":
            arity(1)
            query = _want_text(args[0], fn, "text to send")
            if query == "":
                raise ScriptRuntimeError("llm() expects non-empty text")
            if self.subcall is None:
                raise ScriptRuntimeError("llm() is not available in this session")
            result = self.subcall(query)
            self.subcalls_made += 1
            return _checked_text(result, self.limits)
        raise ScriptRuntimeError(f"unknown function '{fn}'")

    # -- expressions ---------------------------------------------------

    def _eval(self, expr: Expr) -> Value:
        if isinstance(expr, StringLit):
            return expr.value
        if isinstance(expr, IntLit):
            return expr.value
        if isinstance(expr, Var):
            return self.env.get(expr.name)
        if isinstance(expr, Slice):
            base = self._eval(expr.base)
            if not isinstance(base, str):
                raise ScriptRuntimeError(f"cannot slice a {_type_name(base)}")
            n = len(base)
            a = max(0, min(expr.start, n))
            b = max(a, min(expr.stop, n))
            return base[a:b]
        if isinstance(expr, Concat):
            left = self._eval(expr.left)
            right = self._eval(expr.right)
            parts = []
            for side in (left, right):
                if isinstance(side, list):
                    raise ScriptRuntimeError("cannot concatenate a list (use join)")
                parts.append(side if isinstance(side, str) else str(side))
            return _checked_text(parts[0] + parts[1], self.limits)
        if isinstance(expr, Call):
            args = [self._eval(a) for a in expr.args]
            return self._call(expr.fn, args)
        raise ScriptRuntimeError(f"unsupported expression {expr!r}")

    # -- statements ----------------------------------------------------

    def run(self, program: ScriptProgram) -> ExecOutcome:
        for stmt in program.statements:
            if self.steps_used >= self.limits.max_steps:
                self.budget_stop = f"step budget exhausted ({self.limits.max_steps} steps)"
                self.entries.append(f"ERROR: {self.budget_stop}")
                break
            self.steps_used += 1
            try:
                if isinstance(stmt, Assignment):
                    self.env._bind_checked(stmt.name, self._eval(stmt.expr))
                elif isinstance(stmt, Print):
                    self.entries.append(render_value(self._eval(stmt.expr)))
                elif isinstance(stmt, Final):
                    self.final = FinalSignal(render_value(self._eval(stmt.expr)))
                elif isinstance(stmt, FinalVar):
                    # A missing variable still terminates: the error text
                    # becomes the answer and is scored as wrong, surfacing
                    # format collapse instead of masking it.
                    bound = self.env.bindings.get(stmt.name)
                    if bound is None:
                        self.final = FinalSignal(f"ERROR: undefined variable {stmt.name}")
                    else:
                        self.final = FinalSignal(render_value(bound))
            except ScriptRuntimeError as exc:
                self.entries.append(f"ERROR: {exc}")
            except _BudgetViolation as exc:
                self.budget_stop = str(exc)
                self.entries.append(f"ERROR: {exc}")
                break
            except HaltExecution as exc:
                self.budget_stop = str(exc)
                self.entries.append(f"ERROR: {exc}")
                break
            if self.final is not None:
                break
        return ExecOutcome(
            transcript="\n".join(self.entries),
            final=self.final,
            steps_used=self.steps_used,
            subcalls_made=self.subcalls_made,
            budget_stop=self.budget_stop,
        )


def execute(
    program: ScriptProgram,
    env: Environment,
    limits: SandboxLimits | None = None,
    subcall: SubcallHook | None = None,
) -> ExecOutcome:
    """Run a program against the environment and report the outcome.

    Identical inputs and a deterministic hook give an identical outcome.
    """
    return _Execution(env, limits or env.limits, subcall).run(program)

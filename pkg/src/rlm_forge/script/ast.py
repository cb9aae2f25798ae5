"""Syntax tree for the REPL script language.

Nodes are immutable dataclasses; ``render()`` on a program produces the
canonical source form, and parsing that form yields an equal tree.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

# Builtins callable from scripts. `llm` is special-cased by the
# interpreter (it dispatches to the orchestrator-provided subcall hook).
FUNCTION_NAMES = frozenset(
    {
        "len",
        "find",
        "findall",
        "count",
        "split",
        "lines",
        "join",
        "get",
        "chunk",
        "lower",
        "strip",
        "peek",
        "llm",
    }
)

# Names that cannot be assignment targets.
RESERVED_TARGETS = frozenset({"print", "FINAL", "FINAL_VAR"}) | FUNCTION_NAMES


def quote_string(value: str) -> str:
    """Render a text value as a double-quoted script literal."""
    out = ['"']
    for ch in value:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


@dataclass(frozen=True)
class StringLit:
    value: str

    def render(self) -> str:
        return quote_string(self.value)


@dataclass(frozen=True)
class IntLit:
    value: int

    def render(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class Slice:
    base: "Expr"
    start: int
    stop: int

    def render(self) -> str:
        return f"{self.base.render()}[{self.start}:{self.stop}]"


@dataclass(frozen=True)
class Concat:
    left: "Expr"
    right: "Expr"

    def render(self) -> str:
        return f"{self.left.render()} + {self.right.render()}"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]

    def render(self) -> str:
        return f"{self.fn}({', '.join(a.render() for a in self.args)})"


Expr = Union[StringLit, IntLit, Var, Slice, Concat, Call]


@dataclass(frozen=True)
class Assignment:
    name: str
    expr: Expr

    def render(self) -> str:
        return f"{self.name} = {self.expr.render()}"


@dataclass(frozen=True)
class Print:
    expr: Expr

    def render(self) -> str:
        return f"print({self.expr.render()})"


@dataclass(frozen=True)
class Final:
    expr: Expr

    def render(self) -> str:
        return f"FINAL({self.expr.render()})"


@dataclass(frozen=True)
class FinalVar:
    name: str

    def render(self) -> str:
        return f"FINAL_VAR({self.name})"


Statement = Union[Assignment, Print, Final, FinalVar]


@dataclass(frozen=True)
class ScriptProgram:
    statements: tuple[Statement, ...]

    def render(self) -> str:
        """Canonical source: one statement per line, source order."""
        return "\n".join(s.render() for s in self.statements)

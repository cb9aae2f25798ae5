"""Parser for the REPL script language.

Grammar (one statement per line; `;` also separates statements):

    program    := line*
    line       := assignment | command
    assignment := IDENT "=" expr
    command    := "print(" expr ")" | "FINAL(" expr ")" | "FINAL_VAR(" IDENT ")"
    expr       := STRING | INT | IDENT | expr "[" INT ":" INT "]"
                | expr "+" expr | fncall
    fncall     := FNAME "(" expr ("," expr)* ")"
    FNAME      := len | find | findall | count | split | lines | join
                | get | chunk | lower | strip | peek | llm

Strings are double-quoted with escapes \\" \\\\ \\n \\t. `#` starts a
comment running to end of line. Integers are signed 64-bit.

Any violation raises :class:`ParseError` with the offending line number;
the parser never raises anything else on malformed input.
"""
from __future__ import annotations

from dataclasses import dataclass

from .ast import (
    Assignment,
    Call,
    Concat,
    Expr,
    Final,
    FinalVar,
    FUNCTION_NAMES,
    IntLit,
    Print,
    RESERVED_TARGETS,
    ScriptProgram,
    Slice,
    Statement,
    StringLit,
    Var,
)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

# Calls nest only through arguments; this bounds parser recursion.
_MAX_EXPR_DEPTH = 100

_DIGITS = set("0123456789")
_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | _DIGITS
_SYMBOLS = {
    "(": "LPAREN",
    ")": "RPAREN",
    "[": "LBRACKET",
    "]": "RBRACKET",
    ":": "COLON",
    ",": "COMMA",
    "+": "PLUS",
    "=": "EQUALS",
    ";": "SEMI",
}
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


class ParseError(Exception):
    """Grammar or token violation; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class _Token:
    kind: str
    value: object  # str for IDENT/STRING, int for INT, None for symbols

    def describe(self) -> str:
        if self.kind == "IDENT":
            return f"identifier '{self.value}'"
        if self.kind == "INT":
            return f"integer {self.value}"
        if self.kind == "STRING":
            return "string literal"
        sym = {v: k for k, v in _SYMBOLS.items()}[self.kind]
        return f"'{sym}'"


def _tokenize_line(line: str, line_no: int) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(line)
    while i < n:
        ch = line[i]
        if ch in " \t\r":
            i += 1
            continue
        if ch == "#":
            break
        if ch in _SYMBOLS:
            tokens.append(_Token(_SYMBOLS[ch], None))
            i += 1
            continue
        if ch == '"':
            i += 1
            chars: list[str] = []
            while True:
                if i >= n:
                    raise ParseError(line_no, "unterminated string literal")
                c = line[i]
                if c == '"':
                    i += 1
                    break
                if c == "\\":
                    if i + 1 >= n:
                        raise ParseError(line_no, "unterminated string escape")
                    esc = line[i + 1]
                    if esc not in _ESCAPES:
                        raise ParseError(line_no, f"unsupported escape '\\{esc}'")
                    chars.append(_ESCAPES[esc])
                    i += 2
                else:
                    chars.append(c)
                    i += 1
            tokens.append(_Token("STRING", "".join(chars)))
            continue
        if ch in _DIGITS or (ch == "-" and i + 1 < n and line[i + 1] in _DIGITS):
            j = i + 1
            while j < n and line[j] in _DIGITS:
                j += 1
            value = int(line[i:j])
            if not (INT64_MIN <= value <= INT64_MAX):
                raise ParseError(line_no, f"integer literal out of 64-bit range: {line[i:j]}")
            tokens.append(_Token("INT", value))
            i = j
            continue
        if ch in _IDENT_START:
            j = i + 1
            while j < n and line[j] in _IDENT_CONT:
                j += 1
            tokens.append(_Token("IDENT", line[i:j]))
            i = j
            continue
        raise ParseError(line_no, f"unexpected character {ch!r}")
    return tokens


class _Stream:
    def __init__(self, tokens: list[_Token], line_no: int):
        self.tokens = tokens
        self.pos = 0
        self.line_no = line_no

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.line_no, "unexpected end of line")
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.line_no, f"expected {what}, found end of line")
        if tok.kind != kind:
            raise ParseError(self.line_no, f"expected {what}, found {tok.describe()}")
        self.pos += 1
        return tok

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _parse_primary(s: _Stream, depth: int) -> Expr:
    if depth > _MAX_EXPR_DEPTH:
        raise ParseError(s.line_no, "expression too deeply nested")
    tok = s.peek()
    if tok is None:
        raise ParseError(s.line_no, "expected expression, found end of line")
    if tok.kind == "STRING":
        s.next()
        return StringLit(str(tok.value))
    if tok.kind == "INT":
        s.next()
        return IntLit(int(tok.value))
    if tok.kind == "IDENT":
        s.next()
        name = str(tok.value)
        nxt = s.peek()
        if nxt is not None and nxt.kind == "LPAREN":
            if name not in FUNCTION_NAMES:
                raise ParseError(s.line_no, f"unknown function '{name}'")
            s.next()
            args = [_parse_expr(s, depth + 1)]
            while s.peek() is not None and s.peek().kind == "COMMA":
                s.next()
                args.append(_parse_expr(s, depth + 1))
            s.expect("RPAREN", "')'")
            return Call(name, tuple(args))
        return Var(name)
    raise ParseError(s.line_no, f"expected expression, found {tok.describe()}")


def _parse_term(s: _Stream, depth: int) -> Expr:
    node = _parse_primary(s, depth)
    while s.peek() is not None and s.peek().kind == "LBRACKET":
        s.next()
        start = s.expect("INT", "slice start integer")
        s.expect("COLON", "':'")
        stop = s.expect("INT", "slice stop integer")
        s.expect("RBRACKET", "']'")
        node = Slice(node, int(start.value), int(stop.value))
    return node


def _parse_expr(s: _Stream, depth: int = 0) -> Expr:
    if depth > _MAX_EXPR_DEPTH:
        raise ParseError(s.line_no, "expression too deeply nested")
    node = _parse_term(s, depth)
    while s.peek() is not None and s.peek().kind == "PLUS":
        s.next()
        node = Concat(node, _parse_term(s, depth))
    return node


def _parse_statement(s: _Stream) -> Statement:
    head = s.expect("IDENT", "statement")
    name = str(head.value)
    nxt = s.peek()

    if name in ("print", "FINAL", "FINAL_VAR") and nxt is not None and nxt.kind == "LPAREN":
        s.next()
        if name == "FINAL_VAR":
            ident = s.expect("IDENT", "variable name")
            s.expect("RPAREN", "')'")
            stmt: Statement = FinalVar(str(ident.value))
        else:
            expr = _parse_expr(s)
            s.expect("RPAREN", "')'")
            stmt = Print(expr) if name == "print" else Final(expr)
        return stmt

    if nxt is not None and nxt.kind == "EQUALS":
        if name in RESERVED_TARGETS:
            raise ParseError(s.line_no, f"cannot assign to reserved name '{name}'")
        s.next()
        expr = _parse_expr(s)
        return Assignment(name, expr)

    raise ParseError(
        s.line_no,
        f"expected assignment or command, found {nxt.describe() if nxt else 'end of line'}",
    )


def parse_script(source: str) -> ScriptProgram:
    """Parse arbitrary text into a program.

    Raises :class:`ParseError` on the first violation; callers feed the
    message back to the model rather than treating it as fatal.
    """
    statements: list[Statement] = []
    for line_no, raw in enumerate(source.split("\n"), start=1):
        tokens = _tokenize_line(raw, line_no)
        # Split on semicolons so `a = 1; print(a)` is two statements.
        group: list[_Token] = []
        groups: list[list[_Token]] = []
        for tok in tokens:
            if tok.kind == "SEMI":
                groups.append(group)
                group = []
            else:
                group.append(tok)
        groups.append(group)
        for grp in groups:
            if not grp:
                continue
            stream = _Stream(grp, line_no)
            stmt = _parse_statement(stream)
            if not stream.done():
                leftover = stream.peek()
                assert leftover is not None
                raise ParseError(line_no, f"unexpected {leftover.describe()} after statement")
            statements.append(stmt)
    return ScriptProgram(tuple(statements))

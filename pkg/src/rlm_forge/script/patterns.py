"""Conservative regular-expression subset for script search builtins.

Allowed: literal characters, escaped metacharacters, the shorthand
classes \\d \\w \\s (and their negations), character classes like
[a-z0-9] with optional leading ^, the wildcard `.`, quantifiers `*` `+`
`?`, alternation `|`, grouping `(...)`, and the anchors `^` `$`.

Excluded on purpose: backreferences, lookaround, counted repetition
`{m,n}` (brace characters must be escaped), inline flags, named groups,
and non-greedy quantifiers. `.` does not match newlines and anchors bind
to the whole text (no multiline mode). Matching is case-sensitive.

Validation happens before compilation so that a pattern either works
identically everywhere or is rejected with a clear message.
"""
from __future__ import annotations

import re

_ESCAPABLE = set(".\\*+?|()[]^$-{}/\"'")
_CLASS_SHORTHANDS = set("dwsDWS")
_CHAR_ESCAPES = {"n": "\n", "t": "\t"}


class PatternError(ValueError):
    """Pattern falls outside the supported subset or is malformed."""


class _Scanner:
    def __init__(self, pattern: str):
        self.pattern = pattern
        self.pos = 0

    def peek(self) -> str | None:
        return self.pattern[self.pos] if self.pos < len(self.pattern) else None

    def next(self) -> str:
        ch = self.peek()
        if ch is None:
            raise PatternError("unexpected end of pattern")
        self.pos += 1
        return ch

    def done(self) -> bool:
        return self.pos >= len(self.pattern)


def _scan_escape(s: _Scanner) -> None:
    ch = s.next()
    if ch.isdigit():
        raise PatternError("backreferences are not supported")
    if ch in _ESCAPABLE or ch in _CLASS_SHORTHANDS or ch in _CHAR_ESCAPES:
        return
    raise PatternError(f"unsupported escape '\\{ch}'")


def _scan_class(s: _Scanner) -> None:
    if s.peek() == "^":
        s.next()
    # a literal ] inside a class must be written \]
    saw_item = False
    while True:
        ch = s.peek()
        if ch is None:
            raise PatternError("unterminated character class")
        if ch == "]":
            s.next()
            if not saw_item:
                raise PatternError("empty character class")
            return
        if ch == "\\":
            s.next()
            _scan_escape(s)
        elif ch in "{}":
            raise PatternError("brace characters must be escaped")
        else:
            s.next()
        saw_item = True


def _scan_atom(s: _Scanner, depth: int) -> bool:
    """Consume one atom; returns True when something quantifiable was read."""
    ch = s.next()
    if ch == "\\":
        _scan_escape(s)
        return True
    if ch == "[":
        _scan_class(s)
        return True
    if ch == "(":
        if s.peek() == "?":
            raise PatternError("(?...) group extensions are not supported")
        _scan_alternation(s, depth + 1)
        if s.peek() != ")":
            raise PatternError("unterminated group")
        s.next()
        return True
    if ch == ".":
        return True
    if ch in "^$":
        return False  # anchors are not quantifiable
    if ch in "*+?":
        raise PatternError(f"quantifier '{ch}' has nothing to repeat")
    if ch in "{}":
        raise PatternError("brace characters must be escaped")
    if ch in ")|]":
        raise PatternError(f"unexpected '{ch}'")
    return True  # plain literal


def _scan_sequence(s: _Scanner, depth: int) -> None:
    while True:
        ch = s.peek()
        if ch is None or ch in ")|":
            return
        quantifiable = _scan_atom(s, depth)
        if s.peek() in ("*", "+", "?"):
            if not quantifiable:
                raise PatternError("quantifier applied to an anchor")
            s.next()
            if s.peek() in ("*", "+", "?"):
                raise PatternError("stacked quantifiers are not supported")


def _scan_alternation(s: _Scanner, depth: int) -> None:
    if depth > 50:
        raise PatternError("pattern groups nested too deeply")
    _scan_sequence(s, depth)
    while s.peek() == "|":
        s.next()
        _scan_sequence(s, depth)


def validate_pattern(pattern: str) -> None:
    """Raise :class:`PatternError` unless the pattern is in the subset."""
    if pattern == "":
        raise PatternError("empty pattern")
    s = _Scanner(pattern)
    _scan_alternation(s, 0)
    if not s.done():
        raise PatternError(f"unexpected '{s.peek()}'")


def compile_pattern(pattern: str) -> "re.Pattern[str]":
    """Validate against the subset, then compile with the stdlib engine."""
    validate_pattern(pattern)
    try:
        return re.compile(pattern)
    except re.error as exc:  # validator should catch everything first
        raise PatternError(str(exc)) from exc

"""Sanitize raw model responses and pull out scripts and final answers.

Reasoning models wrap their output in ``<thinking>...</thinking>`` (or
``<think>``) spans and sometimes emit stray closing tags; both break
naive fence scanning, so everything here runs on stripped text.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal, Optional

DEFAULT_THINK_TAGS = ("thinking", "think")
REPL_FENCE_TAG = "repl"

_FINAL_VAR_RE = re.compile(r"FINAL_VAR\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\)")
_FINAL_LIT_RE = re.compile(r'FINAL\(\s*"((?:\\.|[^"\\])*)"\s*\)')
_STRING_UNESCAPES = {"\\\\": "\\", '\\"': '"', "\\n": "\n", "\\t": "\t"}


@dataclass(frozen=True)
class FinalMarker:
    kind: Literal["final", "final_var"]
    payload: str  # literal answer text, or the variable name


@dataclass(frozen=True)
class ParsedResponse:
    clean_text: str
    code_blocks: tuple[str, ...]
    final_marker: Optional[FinalMarker]


def strip_think_tags(raw: str, tags: tuple[str, ...] = DEFAULT_THINK_TAGS) -> str:
    """Remove well-formed think spans and stray closing tags.

    Nested spans are erased innermost-first by repeated passes until a
    fixpoint, then leftover closers are dropped. Idempotent, and the
    identity on text without tags.
    """
    text = raw
    patterns = [
        re.compile(rf"<{tag}>(?:(?!<{tag}>).)*?</{tag}>", re.DOTALL) for tag in tags
    ]
    while True:
        before = text
        for pattern in patterns:
            text = pattern.sub("", text)
        if text == before:
            break
    for tag in tags:
        text = text.replace(f"</{tag}>", "")
    return text


def _scan_fences(text: str) -> tuple[list[tuple[str, str]], list[tuple[int, int]]]:
    """Walk fence lines; return (tag, content) pairs and fenced spans.

    A line whose stripped form starts with three backticks opens or
    closes a fence; the opener's remainder is the tag. An unterminated
    final fence runs to the end of the text.
    """
    blocks: list[tuple[str, str]] = []
    spans: list[tuple[int, int]] = []
    offset = 0
    open_tag: str | None = None
    span_start = 0
    content_lines: list[str] = []
    for line in text.split("\n"):
        line_end = offset + len(line)
        stripped = line.strip()
        if stripped.startswith("```"):
            if open_tag is None:
                rest = stripped[3:].strip()
                open_tag = rest.split()[0] if rest else ""
                span_start = offset
                content_lines = []
            else:
                blocks.append((open_tag, "\n".join(content_lines)))
                spans.append((span_start, line_end))
                open_tag = None
        elif open_tag is not None:
            content_lines.append(line)
        offset = line_end + 1  # the split newline
    if open_tag is not None:
        blocks.append((open_tag, "\n".join(content_lines)))
        spans.append((span_start, len(text)))
    return blocks, spans


def find_code_blocks(clean: str, tag: str = REPL_FENCE_TAG) -> list[str]:
    """Contents of fences tagged for the REPL, in document order.

    Fences carrying another tag, or none, are ignored.
    """
    blocks, _ = _scan_fences(clean)
    return [content for fence_tag, content in blocks if fence_tag == tag]


def _unescape_literal(payload: str) -> str:
    out = []
    i = 0
    while i < len(payload):
        two = payload[i : i + 2]
        if two in _STRING_UNESCAPES:
            out.append(_STRING_UNESCAPES[two])
            i += 2
        else:
            out.append(payload[i])
            i += 1
    return "".join(out)


def find_final_answer(clean: str) -> Optional[FinalMarker]:
    """Last plain-text FINAL("...") or FINAL_VAR(name) outside any fence.

    Markers inside fenced blocks are left to the script engine.
    """
    _, spans = _scan_fences(clean)

    def fenced(pos: int) -> bool:
        return any(start <= pos < end for start, end in spans)

    best: tuple[int, FinalMarker] | None = None
    for m in _FINAL_VAR_RE.finditer(clean):
        if not fenced(m.start()):
            best = (m.start(), FinalMarker("final_var", m.group(1)))
    for m in _FINAL_LIT_RE.finditer(clean):
        if not fenced(m.start()) and (best is None or m.start() > best[0]):
            best = (m.start(), FinalMarker("final", _unescape_literal(m.group(1))))
    return best[1] if best else None


def parse_response(
    raw: str,
    tag: str = REPL_FENCE_TAG,
    think_tags: tuple[str, ...] = DEFAULT_THINK_TAGS,
) -> ParsedResponse:
    """One-stop sanitize + extract for a raw model response."""
    clean = strip_think_tags(raw, think_tags)
    return ParsedResponse(
        clean_text=clean,
        code_blocks=tuple(find_code_blocks(clean, tag)),
        final_marker=find_final_answer(clean),
    )

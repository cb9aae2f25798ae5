"""Benchmark datasets and answer scoring.

Ships a deterministic single-needle haystack generator plus JSONL
loaders for two exported formats, and the scorers: exact containment
for text answers, exact match for labels, and the linear penalty
``max(0, 1 - 0.75*|y - y_hat|)`` for numeric answers.
"""
from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .util import estimate_tokens

logger = logging.getLogger(__name__)

LOAD_FORMATS = ("ruler_niah", "oolong_export")

_ANSWER_LINE_RE = re.compile(r"Answer:\s*(.+)")
_NUMBER_TOKEN_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)")


@dataclass(frozen=True)
class ExactText:
    """All listed strings must appear as substrings of the answer."""

    answers: tuple[str, ...]

    def __post_init__(self):
        if not self.answers:
            raise ValueError("ExactText needs at least one answer")


@dataclass(frozen=True)
class ExactLabel:
    label: str


@dataclass(frozen=True)
class Numeric:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("Numeric gold must be finite")


Gold = Union[ExactText, ExactLabel, Numeric]


@dataclass
class BenchSample:
    id: str
    context: str
    question: str
    gold: Gold
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.context:
            raise ValueError("context must be non-empty")


@dataclass(frozen=True)
class LengthFilter:
    min_tokens: int = 1024
    max_tokens: int = 65536

    def admits(self, token_estimate: int) -> bool:
        return self.min_tokens <= token_estimate <= self.max_tokens


class MalformedLine(Exception):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class InsufficientRecords(Exception):
    pass


# -- synthetic single-needle generation --------------------------------

_NOUNS = (
    "accordions", "anchors", "beacons", "bridges", "cabinets", "candles",
    "canyons", "compasses", "crystals", "dominoes", "engines", "fountains",
    "gardens", "glaciers", "hammers", "harbors", "islands", "kettles",
    "ladders", "lanterns", "magnets", "meadows", "mirrors", "orchards",
    "pyramids", "rivers", "saddles", "satchels", "shutters", "spindles",
    "steeples", "tunnels", "turbines", "violins", "whistles", "windmills",
)

_FILLER_SUBJECTS = (
    "The committee", "A quiet observer", "The survey team", "One archivist",
    "The local guild", "A traveling merchant", "The night watch",
    "An old cartographer", "The harbor master", "A patient clerk",
)
_FILLER_VERBS = (
    "recorded", "described", "catalogued", "inspected", "sketched",
    "measured", "compared", "revisited", "annotated", "reviewed",
)
_FILLER_OBJECTS = (
    "the weathered ledgers", "a row of storage crates", "the eastern corridor",
    "several faded maps", "the irrigation channels", "a stack of reports",
    "the courtyard tiles", "the shipping manifests", "an overgrown footpath",
    "the disused signal tower",
)
_FILLER_TAILS = (
    "before the season turned", "without noting anything unusual",
    "as part of the routine rounds", "under a gray afternoon sky",
    "while the archive stayed quiet", "and filed the summary away",
    "per the standing instructions", "long after the market closed",
)


def _filler_sentence(rng: random.Random) -> str:
    return (
        f"{rng.choice(_FILLER_SUBJECTS)} {rng.choice(_FILLER_VERBS)} "
        f"{rng.choice(_FILLER_OBJECTS)} {rng.choice(_FILLER_TAILS)}."
    )


def generate_sniah(count: int, haystack_tokens: int, seed: int) -> list[BenchSample]:
    """Deterministic single-needle retrieval samples.

    Each context is filler prose of roughly ``haystack_tokens`` (4 code
    points per token) with exactly one planted sentence of the form
    "The special magic number for <noun> is <7-digit value>." The filler
    contains no digits, so the planted value occurs exactly once.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if haystack_tokens < 64:
        raise ValueError("haystack_tokens must be >= 64")
    rng = random.Random(seed)
    samples = []
    target_chars = haystack_tokens * 4
    for i in range(count):
        noun = rng.choice(_NOUNS)
        value = str(rng.randint(1_000_000, 9_999_999))
        needle = f"The special magic number for {noun} is {value}."

        sentences = []
        total = 0
        while total < target_chars:
            sentence = _filler_sentence(rng)
            sentences.append(sentence)
            total += len(sentence) + 1
        position = rng.randint(max(1, len(sentences) // 10), max(1, len(sentences) - 1))
        sentences.insert(position, needle)
        context = " ".join(sentences)

        question = (
            f"What is the special magic number for {noun} mentioned "
            "in the provided text?"
        )
        samples.append(
            BenchSample(
                id=f"sniah-{i:04d}",
                context=context,
                question=question,
                gold=ExactText((value,)),
                meta={
                    "source": "sniah",
                    "token_length_estimate": estimate_tokens(context),
                    "noun": noun,
                    "needle_value": value,
                },
            )
        )
    return samples


# -- JSONL ingestion ----------------------------------------------------

def _sample_from_ruler(obj: dict) -> BenchSample:
    outputs = obj["outputs"]
    if not isinstance(outputs, list) or not outputs:
        raise KeyError("outputs")
    length = int(obj["length"])
    if length <= 0:
        raise ValueError("length must be positive")
    return BenchSample(
        id=f"ruler-{obj['index']}",
        context=obj["input"],
        question="",  # the exported prompt already embeds the question
        gold=ExactText(tuple(str(o) for o in outputs)),
        meta={
            "source": "ruler_niah",
            "token_length_estimate": length,
        },
    )


def _sample_from_oolong(obj: dict) -> BenchSample:
    answer_type = obj["answer_type"]
    if answer_type == "number":
        gold: Gold = Numeric(float(obj["answer"]))
    elif answer_type == "label":
        gold = ExactLabel(str(obj["answer"]))
    else:
        raise KeyError("answer_type")
    context_len = int(obj["context_len"])
    if context_len <= 0:
        raise ValueError("context_len must be positive")
    return BenchSample(
        id=str(obj["id"]),
        context=obj["context"],
        question=obj["question"],
        gold=gold,
        meta={
            "source": str(obj.get("dataset", "oolong")),
            "token_length_estimate": context_len,
            "dataset": str(obj.get("dataset", "")),
        },
    )


def load_jsonl(
    path: str | Path,
    format: str,
    length_filter: LengthFilter | None = None,
    take_first: int | None = None,
    dataset: str | None = None,
    strict: bool = True,
) -> list[BenchSample]:
    """Load exported samples in file order, filter, then take the head.

    ``strict`` aborts on the first malformed line with its number;
    otherwise bad lines are skipped with a warning.
    """
    if format not in LOAD_FORMATS:
        raise ValueError(f"unknown dataset format {format!r}")
    samples: list[BenchSample] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sample = (
                    _sample_from_ruler(obj)
                    if format == "ruler_niah"
                    else _sample_from_oolong(obj)
                )
            except (ValueError, KeyError, TypeError) as exc:
                if strict:
                    raise MalformedLine(line_no, repr(exc)) from exc
                logger.warning("skipping malformed line %d in %s: %r", line_no, path, exc)
                continue
            if dataset is not None and sample.meta.get("dataset") != dataset:
                continue
            if length_filter is not None and not length_filter.admits(
                int(sample.meta["token_length_estimate"])
            ):
                continue
            samples.append(sample)
            if take_first is not None and dataset is None and length_filter is None:
                if len(samples) >= take_first:
                    break
    if take_first is not None:
        samples = samples[:take_first]
    return samples


# -- scoring ------------------------------------------------------------

def score_numeric(gold: float, predicted: float) -> float:
    """Linear penalty score in [0, 1]: max(0, 1 - 0.75*|gold - predicted|)."""
    return max(0.0, 1.0 - 0.75 * abs(gold - predicted))


def normalize_answer(text: str) -> str:
    """Trim, casefold, and collapse whitespace runs to single spaces."""
    return " ".join(text.casefold().split())


def extract_answer_text(raw_answer: str) -> str:
    """The payload of the last ``Answer: ...`` line, or the whole text."""
    hits = _ANSWER_LINE_RE.findall(raw_answer)
    return hits[-1] if hits else raw_answer


def score_answer(gold: Gold, raw_answer: Optional[str]) -> float:
    """Total scoring function over arbitrary (possibly absent) answers."""
    if raw_answer is None:
        return 0.0
    extracted = normalize_answer(extract_answer_text(raw_answer))
    if isinstance(gold, ExactText):
        return 1.0 if all(normalize_answer(a) in extracted for a in gold.answers) else 0.0
    if isinstance(gold, ExactLabel):
        return 1.0 if extracted == normalize_answer(gold.label) else 0.0
    m = _NUMBER_TOKEN_RE.search(extracted)
    if m is None:
        return 0.0
    try:
        predicted = float(m.group(0))
    except ValueError:
        return 0.0
    return score_numeric(gold.value, predicted)

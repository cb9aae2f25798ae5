"""Per-sample records, failure tagging, cost accounting, and aggregation.

Reports render four headline quantities per condition: accuracy (mean
score x 100), mean execution seconds, mean total tokens in thousands,
and mean cost in US cents, plus failure-tag histograms. One-decimal
rounding happens only at the rendering edge (CSV cells); aggregation
itself keeps full precision.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import yaml

from .backends import TokenUsage
from .benchhub import (
    ExactLabel,
    Gold,
    InsufficientRecords,
    Numeric,
    extract_answer_text,
    normalize_answer,
    score_answer,
)
from .orchestrator import SessionResult

# Closed tag set; only the heuristics below may assign them.
FAILURE_TAGS = (
    "format_collapse",
    "missing_final",
    "answer_format_miss",
    "ungrounded_answer",
    "iteration_cap_hit",
)

GROUP_FIELDS = ("model_id", "depth", "benchmark")

# Fields that vary run-to-run even under a replay backend; replay
# comparisons null these before diffing record files.
VOLATILE_RECORD_FIELDS = ("wall_time_ms",)

_ANSWER_STYLE_RE = re.compile(r"Answer:\s*(.+)")
_PRINT_CALL_RE = re.compile(r"\bprint\(")


class UnknownModel(Exception):
    pass


class EmptyGroup(Exception):
    pass


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    model_id: str
    depth: int
    benchmark: str
    score: float
    wall_time_ms: float
    usage: TokenUsage
    cost_cents: float
    termination: str
    failure_tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must be in [0, 1]")
        if self.cost_cents < 0:
            raise ValueError("cost must be non-negative")

    @property
    def condition(self) -> tuple:
        return (self.model_id, self.depth, self.benchmark)

    def to_json_obj(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "model_id": self.model_id,
            "depth": self.depth,
            "benchmark": self.benchmark,
            "score": self.score,
            "wall_time_ms": self.wall_time_ms,
            "input_tokens": self.usage.input_tokens,
            "output_tokens": self.usage.output_tokens,
            "cost_cents": self.cost_cents,
            "termination": self.termination,
            "failure_tags": list(self.failure_tags),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SampleRecord":
        return cls(
            sample_id=str(obj["sample_id"]),
            model_id=str(obj["model_id"]),
            depth=int(obj["depth"]),
            benchmark=str(obj["benchmark"]),
            score=float(obj["score"]),
            wall_time_ms=float(obj["wall_time_ms"]),
            usage=TokenUsage(int(obj["input_tokens"]), int(obj["output_tokens"])),
            cost_cents=float(obj["cost_cents"]),
            termination=str(obj["termination"]),
            failure_tags=tuple(obj.get("failure_tags", [])),
        )


@dataclass(frozen=True)
class CostModel:
    """Per-model (input, output) prices in US cents per million tokens."""

    prices: dict

    @classmethod
    def from_yaml(cls, path: str | Path) -> "CostModel":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        models = raw.get("models", raw)
        prices = {}
        for model_id, entry in models.items():
            prices[str(model_id)] = (
                float(entry["input_per_million_cents"]),
                float(entry["output_per_million_cents"]),
            )
        for model_id, (p_in, p_out) in prices.items():
            if p_in < 0 or p_out < 0:
                raise ValueError(f"negative price for {model_id}")
        return cls(prices)

    def price_for(self, model_id: str) -> tuple[float, float]:
        try:
            return self.prices[model_id]
        except KeyError:
            raise UnknownModel(
                f"no prices configured for model {model_id!r}"
            ) from None


def compute_cost(usage: TokenUsage, model_id: str, costs: CostModel) -> float:
    """Cost in US cents; unknown models are an explicit error, never 0."""
    p_in, p_out = costs.price_for(model_id)
    return usage.input_tokens / 1e6 * p_in + usage.output_tokens / 1e6 * p_out


def tag_failures(result: SessionResult, gold: Gold, context: str) -> list[str]:
    """Conservative, documented failure heuristics.

    These are proxies: fenced code or ``print(`` in the answer flags
    format collapse; a scored-zero answer that names something absent
    from the context flags an ungrounded (hallucinated) answer.
    """
    tags: list[str] = []
    answer = result.answer

    if answer is not None and ("```" in answer or _PRINT_CALL_RE.search(answer)):
        tags.append("format_collapse")
    if result.termination != "final":
        tags.append("missing_final")
    if isinstance(gold, (Numeric, ExactLabel)):
        if answer is None or not _ANSWER_STYLE_RE.search(answer):
            tags.append("answer_format_miss")
    if answer is not None:
        extracted = normalize_answer(extract_answer_text(answer))
        if (
            extracted
            and score_answer(gold, answer) == 0.0
            and extracted not in normalize_answer(context)
        ):
            tags.append("ungrounded_answer")
    if result.termination == "iterations_exhausted":
        tags.append("iteration_cap_hit")
    return tags


@dataclass(frozen=True)
class AggregateRow:
    group: dict
    n: int
    accuracy_pct: float          # mean score x 100
    strict_pct: float            # share of score == 1, x 100
    mean_seconds: float
    mean_tokens_thousands: float
    mean_cost_cents: float
    tag_counts: dict


def aggregate(
    records: Sequence[SampleRecord],
    group_by: Sequence[str] = GROUP_FIELDS,
) -> list[AggregateRow]:
    """Plain arithmetic means per condition group, in first-seen order."""
    for field_name in group_by:
        if field_name not in GROUP_FIELDS:
            raise ValueError(f"cannot group by {field_name!r}")
    if not records:
        raise EmptyGroup("no records to aggregate")

    groups: dict[tuple, list[SampleRecord]] = {}
    for record in records:
        key = tuple(getattr(record, f) for f in group_by)
        groups.setdefault(key, []).append(record)

    rows = []
    for key, members in groups.items():
        n = len(members)
        tag_counts = {tag: 0 for tag in FAILURE_TAGS}
        for record in members:
            for tag in record.failure_tags:
                if tag in tag_counts:
                    tag_counts[tag] += 1
        rows.append(
            AggregateRow(
                group=dict(zip(group_by, key)),
                n=n,
                accuracy_pct=sum(r.score for r in members) / n * 100.0,
                strict_pct=sum(1 for r in members if r.score == 1.0) / n * 100.0,
                mean_seconds=sum(r.wall_time_ms for r in members) / n / 1000.0,
                mean_tokens_thousands=sum(r.usage.total for r in members) / n / 1000.0,
                mean_cost_cents=sum(r.cost_cents for r in members) / n,
                tag_counts=tag_counts,
            )
        )
    return rows


# -- records files ------------------------------------------------------

def write_records(path: str | Path, records: Iterable[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_obj(), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[SampleRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SampleRecord.from_json_obj(json.loads(line)))
    return records


def recompute_first_n(
    records_file: str | Path,
    n: int,
    group_by: Sequence[str] = GROUP_FIELDS,
    write: bool = True,
) -> tuple[list[AggregateRow], Optional[Path]]:
    """Aggregate only the first ``n`` records, in original file order.

    The source file is left untouched; the trimmed aggregate is written
    alongside it with a ``.first<n>.report.json`` suffix.
    """
    records = read_records(records_file)
    if n < 1 or len(records) < n:
        raise InsufficientRecords(
            f"need at least {max(n, 1)} records, file has {len(records)}"
        )
    rows = aggregate(records[:n], group_by)
    out_path: Optional[Path] = None
    if write:
        source = Path(records_file)
        out_path = source.with_name(f"{source.stem}.first{n}.report.json")
        out_path.write_text(render_json(rows), encoding="utf-8")
    return rows, out_path


# -- rendering ----------------------------------------------------------

def render_csv(rows: Sequence[AggregateRow]) -> str:
    """One row per condition; headline cells rounded to one decimal."""
    if not rows:
        raise EmptyGroup("no rows to render")
    group_fields = list(rows[0].group.keys())
    header = group_fields + [
        "n",
        "accuracy_pct",
        "strict_pct",
        "mean_seconds",
        "mean_tokens_k",
        "mean_cost_cents",
    ] + [f"tag_{t}" for t in FAILURE_TAGS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [row.group[f] for f in group_fields]
            + [
                row.n,
                f"{row.accuracy_pct:.1f}",
                f"{row.strict_pct:.1f}",
                f"{row.mean_seconds:.1f}",
                f"{row.mean_tokens_thousands:.1f}",
                f"{row.mean_cost_cents:.1f}",
            ]
            + [row.tag_counts[t] for t in FAILURE_TAGS]
        )
    return buf.getvalue()


def render_json(rows: Sequence[AggregateRow]) -> str:
    payload = [
        {
            "group": row.group,
            "n": row.n,
            "accuracy_pct": row.accuracy_pct,
            "strict_pct": row.strict_pct,
            "mean_seconds": row.mean_seconds,
            "mean_tokens_thousands": row.mean_tokens_thousands,
            "mean_cost_cents": row.mean_cost_cents,
            "tag_counts": row.tag_counts,
        }
        for row in rows
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


_SVG_METRICS = {
    "accuracy_pct": ("Accuracy (%)", "accuracy_pct"),
    "mean_seconds": ("Average Execution Time (seconds)", "mean_seconds"),
    "mean_tokens_thousands": ("Average Token Usage (thousands)", "mean_tokens_thousands"),
    "mean_cost_cents": ("Average Token Cost (US cents)", "mean_cost_cents"),
}


def render_svg(rows: Sequence[AggregateRow], metric: str) -> str:
    """Self-contained grouped-bar SVG for one metric; no plotting deps."""
    if metric not in _SVG_METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if not rows:
        raise EmptyGroup("no rows to chart")
    title, attr = _SVG_METRICS[metric]
    values = [getattr(row, attr) for row in rows]
    labels = ["/".join(str(v) for v in row.group.values()) for row in rows]
    top = max(values) or 1.0

    bar_w, gap, left, base, height = 60, 24, 60, 240, 170
    width = left + len(rows) * (bar_w + gap) + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="320" '
        f'font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left - 10}" y1="{base}" x2="{width - 10}" y2="{base}" stroke="#333"/>',
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        h = height * value / top
        x = left + i * (bar_w + gap)
        parts.append(
            f'<rect x="{x}" y="{base - h:.1f}" width="{bar_w}" height="{h:.1f}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.0f}" y="{base - h - 4:.1f}" '
            f'text-anchor="middle">{value:.1f}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.0f}" y="{base + 14}" text-anchor="middle" '
            f'font-size="9">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

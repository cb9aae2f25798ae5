"""Drive a benchmark through sessions and persist records and traces."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .backends import ReplayBackend
from .benchhub import BenchSample, score_answer
from .metrics import CostModel, SampleRecord, compute_cost, tag_failures, write_records
from .orchestrator import SessionConfig, SessionResult, run_session, template_hash

logger = logging.getLogger(__name__)

# Task sent when an exported sample embeds its question in the context.
DEFAULT_TASK = "Answer the question contained in the text."


@dataclass
class RunOutput:
    records: list[SampleRecord]
    records_path: Path
    meta_path: Path


def _run_one(
    sample: BenchSample,
    backend,
    session_config: SessionConfig,
    cost_model: CostModel,
    benchmark_name: str,
) -> tuple[SampleRecord, SessionResult]:
    task = sample.question or DEFAULT_TASK
    result = run_session(task, sample.context, session_config, backend)
    record = SampleRecord(
        sample_id=sample.id,
        model_id=getattr(backend, "model_id", "unknown"),
        depth=session_config.budget.depth,
        benchmark=benchmark_name,
        score=score_answer(sample.gold, result.answer),
        wall_time_ms=result.wall_time_ms,
        usage=result.totals,
        cost_cents=compute_cost(
            result.totals, getattr(backend, "model_id", "unknown"), cost_model
        ),
        termination=result.termination,
        failure_tags=tuple(tag_failures(result, sample.gold, sample.context)),
    )
    return record, result


def run_benchmark(
    samples: Sequence[BenchSample],
    backend,
    session_config: SessionConfig,
    cost_model: CostModel,
    benchmark_name: str,
    out_dir: str | Path,
    workers: int = 4,
    run_meta: dict | None = None,
) -> RunOutput:
    """Run every sample, then write records (in sample order), one trace
    file per sample, and run metadata.

    Failed sessions are data, not faults: they land in the records with
    their termination reason. A replay backend consumes its fixture in
    strict call order, so it forces a single worker.
    """
    out = Path(out_dir)
    traces_dir = out / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)

    if isinstance(backend, ReplayBackend) and workers != 1:
        logger.info("replay backend: forcing workers=1 for determinism")
        workers = 1

    started_at = datetime.now(timezone.utc).isoformat()

    def job(sample: BenchSample) -> tuple[SampleRecord, SessionResult]:
        return _run_one(sample, backend, session_config, cost_model, benchmark_name)

    if workers == 1:
        outcomes = [job(s) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, samples))

    records = []
    for sample, (record, result) in zip(samples, outcomes):
        records.append(record)
        trace_path = traces_dir / f"{sample.id}.jsonl"
        with open(trace_path, "w", encoding="utf-8") as fh:
            for event in result.trace:
                fh.write(json.dumps(event.to_json_obj(), sort_keys=True) + "\n")

    records_path = out / "records.jsonl"
    write_records(records_path, records)

    meta = {
        "started_at": started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "samples": len(records),
        "benchmark": benchmark_name,
        "model_id": getattr(backend, "model_id", "unknown"),
        "depth": session_config.budget.depth,
        "max_iterations": session_config.max_iterations,
        "workers": workers,
        "template_sha256": template_hash(session_config.system_template),
    }
    meta.update(run_meta or {})
    meta_path = out / "run_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunOutput(records=records, records_path=records_path, meta_path=meta_path)

"""Command-line entry point.

Subcommands: run, report, trim, generate, score, replay. Runs are
declared in a YAML config (flags override); credentials come only from
environment variables, optionally preloaded from a local .env file.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 fixture or
replay error.
"""
from __future__ import annotations

import argparse
import glob as globlib
import json
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .backends import (
    BackendConfig,
    FixtureExhausted,
    HttpBackend,
    ReplayBackend,
    RuleAgentBackend,
)
from .benchhub import (
    InsufficientRecords,
    LengthFilter,
    MalformedLine,
    generate_sniah,
    load_jsonl,
    score_answer,
)
from .harness import run_benchmark
from .metrics import (
    CostModel,
    EmptyGroup,
    GROUP_FIELDS,
    aggregate,
    read_records,
    recompute_first_n,
    render_csv,
    render_json,
    render_svg,
    _SVG_METRICS,
)
from .orchestrator import RecursionBudget, SessionConfig
from .script import SandboxLimits
from .util import sha256_hex

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_FIXTURE = 4


class ConfigError(Exception):
    pass


def load_dotenv(path: str | Path = ".env") -> None:
    """Load KEY=VALUE lines into the environment without overriding.

    Minimal on purpose: comments and blank lines are skipped, values may
    be single- or double-quoted.
    """
    env_path = Path(path)
    if not env_path.exists():
        return
    for raw in env_path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip().strip("'\"")
        if key and key not in os.environ:
            os.environ[key] = value


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing '{key}' in {where}")
    return mapping[key]


def _section(raw: dict, key: str, where: str, required: bool = True) -> dict:
    value = raw.get(key)
    if value is None:
        if required:
            raise ConfigError(f"missing '{key}' in {where}")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' in {where} must be a mapping")
    return value


def _build_samples(spec: dict, seed: int):
    kind = _require(spec, "kind", "benchmark")
    if kind == "sniah":
        samples = generate_sniah(
            count=int(spec.get("count", 20)),
            haystack_tokens=int(spec.get("haystack_tokens", 32768)),
            seed=int(spec.get("seed", seed)),
        )
        take = spec.get("take_first")
        return samples[: int(take)] if take is not None else samples
    if kind in ("ruler_niah", "oolong_export"):
        path = _require(spec, "path", "benchmark")
        if not Path(path).exists():
            raise ConfigError(f"benchmark file not found: {path}")
        length_filter = None
        if "min_tokens" in spec or "max_tokens" in spec:
            length_filter = LengthFilter(
                int(spec.get("min_tokens", 1024)), int(spec.get("max_tokens", 65536))
            )
        try:
            return load_jsonl(
                path,
                format=kind,
                length_filter=length_filter,
                take_first=(
                    int(spec["take_first"]) if spec.get("take_first") is not None else None
                ),
                dataset=spec.get("dataset"),
                strict=bool(spec.get("strict", True)),
            )
        except MalformedLine as exc:
            raise ConfigError(f"malformed benchmark file {path}: {exc}") from exc
    raise ConfigError(f"unknown benchmark kind {kind!r}")


def _build_backend(spec: dict):
    kind = _require(spec, "kind", "backend")
    if kind == "http":
        api_key_env = _require(spec, "api_key_env", "backend")
        if not os.environ.get(api_key_env):
            raise ConfigError(
                f"backend api_key_env {api_key_env!r} is not set in the environment"
            )
        return HttpBackend(
            BackendConfig(
                base_url=_require(spec, "base_url", "backend"),
                model_id=_require(spec, "model_id", "backend"),
                api_key_env=api_key_env,
                timeout_s=float(spec.get("timeout_s", 600.0)),
                max_retries=int(spec.get("max_retries", 3)),
                temperature=spec.get("temperature"),
                extra_params=dict(spec.get("extra_params", {})),
            )
        )
    if kind == "replay":
        fixture = _require(spec, "fixture", "backend")
        if not Path(fixture).exists():
            raise ConfigError(f"replay fixture not found: {fixture}")
        return ReplayBackend.from_jsonl(fixture, model_id=spec.get("model_id", "replay"))
    if kind == "rule":
        return RuleAgentBackend(
            _require(spec, "strategy", "backend"), spec.get("params")
        )
    raise ConfigError(f"unknown backend kind {kind!r}")


def _build_session_config(spec: dict) -> SessionConfig:
    sandbox_spec = spec.get("sandbox", {})
    sandbox = SandboxLimits(
        max_steps=int(sandbox_spec.get("max_steps", 10_000)),
        max_value_bytes=int(sandbox_spec.get("max_value_bytes", 16 * 2**20)),
        max_env_bytes=int(sandbox_spec.get("max_env_bytes", 256 * 2**20)),
        max_list_items=int(sandbox_spec.get("max_list_items", 100_000)),
        max_subcalls=int(sandbox_spec.get("max_subcalls", 50)),
    )
    template = spec.get("system_template_path")
    template_text = ""
    if template:
        if not Path(template).exists():
            raise ConfigError(f"system template not found: {template}")
        template_text = Path(template).read_text(encoding="utf-8")
    try:
        return SessionConfig(
            budget=RecursionBudget(int(spec.get("depth", 1))),
            max_iterations=int(spec.get("max_iterations", 30)),
            transcript_truncate=int(spec.get("transcript_truncate", 8192)),
            sandbox=sandbox,
            system_template=template_text,
            token_ceiling=(
                int(spec["token_ceiling"]) if spec.get("token_ceiling") else None
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {config_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path} must contain a mapping")

    cost_path = _require(raw, "cost_model", str(config_path))
    if not Path(cost_path).exists():
        raise ConfigError(f"cost model file not found: {cost_path}")
    cost_model = CostModel.from_yaml(cost_path)

    seed = int(raw.get("seed", 0))
    benchmark_spec = _section(raw, "benchmark", str(config_path))
    samples = _build_samples(benchmark_spec, seed)
    if not samples:
        raise ConfigError("benchmark selection produced zero samples")
    backend = _build_backend(_section(raw, "backend", str(config_path)))
    session_config = _build_session_config(
        _section(raw, "session", str(config_path), required=False)
    )

    workers = int(os.environ.get("RLM_FORGE_WORKERS", raw.get("workers", 4)))
    if args.workers is not None:
        workers = args.workers
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    out_dir = Path(args.out or raw.get("output_dir", "runs/latest"))
    benchmark_name = str(
        raw.get("benchmark_name", benchmark_spec.get("kind", "benchmark"))
    )
    run_meta = {
        "config_path": str(config_path),
        "config_sha256": sha256_hex(
            json.dumps(raw, sort_keys=True, default=str)
        ),
        "seed": seed,
        "version": __version__,
    }
    output = run_benchmark(
        samples,
        backend,
        session_config,
        cost_model,
        benchmark_name,
        out_dir,
        workers=workers,
        run_meta=run_meta,
    )
    print(f"wrote {len(output.records)} records to {output.records_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    paths = sorted(globlib.glob(args.records_glob))
    if not paths:
        raise FileNotFoundError(f"no records match {args.records_glob!r}")
    records = []
    for path in paths:
        records.extend(read_records(path))
    group_by = tuple(args.group_by.split(",")) if args.group_by else GROUP_FIELDS
    rows = aggregate(records, group_by)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(render_csv(rows), encoding="utf-8")
    (out_dir / "report.json").write_text(render_json(rows), encoding="utf-8")
    if args.svg:
        for metric in _SVG_METRICS:
            (out_dir / f"report_{metric}.svg").write_text(
                render_svg(rows, metric), encoding="utf-8"
            )
    print(render_csv(rows), end="")
    return EXIT_OK


def cmd_trim(args) -> int:
    rows, out_path = recompute_first_n(args.records_file, args.n)
    print(render_csv(rows), end="")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_generate(args) -> int:
    samples = generate_sniah(args.count, args.haystack_tokens, args.seed)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            assert isinstance(sample.gold.answers, tuple)  # ExactText by construction
            fh.write(
                json.dumps(
                    {
                        "index": i,
                        "input": sample.context + "\n\n" + sample.question,
                        "outputs": list(sample.gold.answers),
                        "length": sample.meta["token_length_estimate"],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    print(f"wrote {len(samples)} samples to {out_path}")
    return EXIT_OK


def cmd_score(args) -> int:
    samples = load_jsonl(args.dataset, format=args.format)
    by_id = {s.id: s for s in samples}
    results = []
    with open(args.answers, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            sample_id = str(obj["id"])
            if sample_id not in by_id:
                print(f"warning: unknown sample id {sample_id!r} (line {line_no})",
                      file=sys.stderr)
                continue
            answer = obj.get("answer")
            score = score_answer(by_id[sample_id].gold, answer)
            results.append({"id": sample_id, "score": score})
    out_path = Path(args.answers).with_suffix(".scored.jsonl")
    with open(out_path, "w", encoding="utf-8") as fh:
        for row in results:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    mean = sum(r["score"] for r in results) / len(results) if results else 0.0
    print(f"scored {len(results)} answers, mean score {mean:.3f}; wrote {out_path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    """Re-render a recorded trace as an indented, human-readable log."""
    path = Path(args.trace_file)
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            event = json.loads(line)
            session_path = event["session_path"]
            kind = event["kind"]
            payload = event.get("payload", {})
        except (ValueError, KeyError) as exc:
            raise FixtureExhausted(f"malformed trace line: {exc}") from exc
        indent = "  " * session_path.count(".")
        if kind == "backend_call":
            if "error" in payload:
                detail = f"error={payload['error']}: {payload.get('message', '')}"
            else:
                detail = (
                    f"model={payload.get('model')} "
                    f"in={payload.get('input_tokens')} out={payload.get('output_tokens')} "
                    f"latency={payload.get('latency_ms', 0):.0f}ms"
                )
        elif kind == "script_exec":
            if "parse_error" in payload:
                detail = f"parse_error={payload['parse_error']!r}"
            else:
                detail = (
                    f"steps={payload.get('steps_used')} "
                    f"subcalls={payload.get('subcalls_made')} "
                    f"final={payload.get('final')}"
                )
                transcript = payload.get("transcript")
                if transcript:
                    body = "\n".join(
                        f"{indent}    | {t}" for t in transcript.splitlines()
                    )
                    detail += "\n" + body
        elif kind == "subcall_spawn":
            detail = f"child={payload.get('child_path')} depth={payload.get('depth')}"
        else:
            detail = f"reason={payload.get('reason')}"
        print(f"{indent}[{session_path}] {kind} {detail}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlm-forge",
        description="Recursive LM sessions over a sandboxed text REPL.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--env-file", default=".env", help="dotenv file to preload (default .env)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark per a YAML config")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.set_defaults(fn=cmd_run)

    p_report = sub.add_parser("report", help="aggregate records into a report")
    p_report.add_argument("records_glob")
    p_report.add_argument("--group-by", default=None, help="comma-separated fields")
    p_report.add_argument("--out", default="report")
    p_report.add_argument("--svg", action="store_true", help="also emit bar charts")
    p_report.set_defaults(fn=cmd_report)

    p_trim = sub.add_parser("trim", help="recompute aggregates over the first n records")
    p_trim.add_argument("records_file")
    p_trim.add_argument("n", type=int)
    p_trim.set_defaults(fn=cmd_trim)

    p_gen = sub.add_parser("generate", help="write a synthetic needle dataset")
    p_gen.add_argument("--count", type=int, default=20)
    p_gen.add_argument("--haystack-tokens", type=int, default=32768)
    p_gen.add_argument("--seed", type=int, default=7)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(fn=cmd_generate)

    p_score = sub.add_parser("score", help="score an answers file against a dataset")
    p_score.add_argument("--answers", required=True)
    p_score.add_argument("--dataset", required=True)
    p_score.add_argument("--format", choices=("ruler_niah", "oolong_export"),
                         default="ruler_niah")
    p_score.set_defaults(fn=cmd_score)

    p_replay = sub.add_parser("replay", help="render a trace file as readable text")
    p_replay.add_argument("trace_file")
    p_replay.set_defaults(fn=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    load_dotenv(args.env_file)
    try:
        return args.fn(args)
    except (ConfigError, EmptyGroup, ValueError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InsufficientRecords, FixtureExhausted) as exc:
        print(f"fixture error: {exc}", file=sys.stderr)
        return EXIT_FIXTURE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main(argv=sys.argv[1:]))

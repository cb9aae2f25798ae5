"""CLI surfaces: configs, exit codes, outputs, credential hygiene."""
import json

import yaml

from rlm_forge.cli import EXIT_CONFIG, EXIT_FIXTURE, EXIT_IO, EXIT_OK, load_dotenv, main

COSTS_YAML = """\
models:
  "rule:grep-needle": {input_per_million_cents: 0.0, output_per_million_cents: 0.0}
  "rule:needle-answer": {input_per_million_cents: 0.0, output_per_million_cents: 0.0}
  "rule:delegate-k": {input_per_million_cents: 0.0, output_per_million_cents: 0.0}
  replay: {input_per_million_cents: 20.0, output_per_million_cents: 60.0}
"""


def write_run_config(tmp_path, **overrides):
    config = {
        "benchmark": {"kind": "sniah", "count": 3, "haystack_tokens": 256},
        "benchmark_name": "sniah-tiny",
        "backend": {"kind": "rule", "strategy": "grep-needle"},
        "session": {"depth": 1},
        "cost_model": str(tmp_path / "costs.yaml"),
        "output_dir": str(tmp_path / "out"),
        "workers": 1,
        "seed": 7,
    }
    config.update(overrides)
    (tmp_path / "costs.yaml").write_text(COSTS_YAML, encoding="utf-8")
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path


def test_run_writes_records_traces_and_meta(tmp_path, capsys):
    config_path = write_run_config(tmp_path)
    assert main(["run", str(config_path)]) == EXIT_OK
    out = tmp_path / "out"
    records = (out / "records.jsonl").read_text(encoding="utf-8").strip().splitlines()
    assert len(records) == 3
    first = json.loads(records[0])
    assert first["score"] == 1.0
    assert first["termination"] == "final"
    assert first["model_id"] == "rule:grep-needle"
    traces = list((out / "traces").glob("*.jsonl"))
    assert len(traces) == 3
    meta = json.loads((out / "run_meta.json").read_text(encoding="utf-8"))
    assert meta["samples"] == 3
    assert len(meta["template_sha256"]) == 64
    assert len(meta["config_sha256"]) == 64


def test_run_missing_cost_model_is_config_error_before_sessions(tmp_path):
    config_path = write_run_config(tmp_path, cost_model=str(tmp_path / "absent.yaml"))
    assert main(["run", str(config_path)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_run_missing_config_file_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_run_missing_api_key_env_is_config_error(tmp_path, monkeypatch):
    monkeypatch.delenv("ABSENT_KEY_VAR", raising=False)
    config_path = write_run_config(
        tmp_path,
        backend={
            "kind": "http",
            "base_url": "https://api.example.test/v1",
            "model_id": "m",
            "api_key_env": "ABSENT_KEY_VAR",
        },
    )
    assert main(["run", str(config_path)]) == EXIT_CONFIG


def test_run_depth_zero_with_direct_answer_mock(tmp_path):
    config_path = write_run_config(
        tmp_path,
        backend={"kind": "rule", "strategy": "needle-answer"},
        session={"depth": 0},
    )
    assert main(["run", str(config_path)]) == EXIT_OK
    records = [
        json.loads(line)
        for line in (tmp_path / "out" / "records.jsonl").read_text().splitlines()
    ]
    assert all(r["score"] == 1.0 for r in records)
    assert all(r["depth"] == 0 for r in records)


def test_no_credential_value_leaks_into_outputs(tmp_path, monkeypatch):
    # a dummy secret in the env must never appear in any output file
    secret = "sk-super-secret-value-123"
    monkeypatch.setenv("DUMMY_PROVIDER_KEY", secret)
    config_path = write_run_config(tmp_path)
    assert main(["run", str(config_path)]) == EXIT_OK
    for path in (tmp_path / "out").rglob("*"):
        if path.is_file():
            assert secret not in path.read_text(encoding="utf-8")


def test_generate_then_score_round_trip(tmp_path, capsys):
    dataset = tmp_path / "gen.jsonl"
    assert main([
        "generate", "--count", "4", "--haystack-tokens", "256",
        "--seed", "3", "--out", str(dataset),
    ]) == EXIT_OK
    rows = [json.loads(l) for l in dataset.read_text().splitlines()]
    assert len(rows) == 4
    assert all(set(r) == {"index", "input", "outputs", "length"} for r in rows)

    answers = tmp_path / "answers.jsonl"
    with open(answers, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps({"id": f"ruler-{r['index']}",
                                 "answer": f"Answer: {r['outputs'][0]}"}) + "\n")
    assert main([
        "score", "--answers", str(answers), "--dataset", str(dataset),
        "--format", "ruler_niah",
    ]) == EXIT_OK
    scored = [json.loads(l) for l in
              (tmp_path / "answers.scored.jsonl").read_text().splitlines()]
    assert [s["score"] for s in scored] == [1.0] * 4
    assert "mean score 1.000" in capsys.readouterr().out


def test_report_and_trim(tmp_path, capsys):
    config_path = write_run_config(tmp_path)
    assert main(["run", str(config_path)]) == EXIT_OK
    records_path = tmp_path / "out" / "records.jsonl"

    report_dir = tmp_path / "report"
    assert main([
        "report", str(records_path), "--out", str(report_dir), "--svg",
    ]) == EXIT_OK
    assert (report_dir / "report.csv").exists()
    assert (report_dir / "report.json").exists()
    assert (report_dir / "report_mean_seconds.svg").exists()
    csv_text = (report_dir / "report.csv").read_text(encoding="utf-8")
    assert "accuracy_pct" in csv_text.splitlines()[0]
    assert "100.0" in csv_text.splitlines()[1]

    assert main(["trim", str(records_path), "2"]) == EXIT_OK
    trimmed = records_path.with_name("records.first2.report.json")
    assert trimmed.exists()
    out = capsys.readouterr().out
    assert "wrote" in out


def test_trim_too_few_records_is_fixture_exit(tmp_path):
    config_path = write_run_config(tmp_path)
    assert main(["run", str(config_path)]) == EXIT_OK
    records_path = tmp_path / "out" / "records.jsonl"
    assert main(["trim", str(records_path), "99"]) == EXIT_FIXTURE


def test_report_on_missing_glob_is_io_error(tmp_path):
    assert main(["report", str(tmp_path / "none*.jsonl")]) == EXIT_IO


def test_replay_renders_indented_trace(tmp_path, capsys):
    config_path = write_run_config(
        tmp_path,
        backend={"kind": "rule", "strategy": "delegate-k", "params": {"k": 1}},
        session={"depth": 2},
    )
    assert main(["run", str(config_path)]) == EXIT_OK
    trace = next((tmp_path / "out" / "traces").glob("*.jsonl"))
    assert main(["replay", str(trace)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[root] backend_call" in out
    assert "[root.1] backend_call" in out
    assert "\n  [root.1]" in out  # nested sessions are indented


def test_replay_missing_file_is_io_error(tmp_path):
    assert main(["replay", str(tmp_path / "ghost.jsonl")]) == EXIT_IO


def test_workers_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("RLM_FORGE_WORKERS", "2")
    config_path = write_run_config(tmp_path)
    assert main(["run", str(config_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "out" / "run_meta.json").read_text())
    assert meta["workers"] == 2


def test_malformed_config_shapes_are_config_errors(tmp_path):
    (tmp_path / "costs.yaml").write_text(COSTS_YAML, encoding="utf-8")
    bad_session = tmp_path / "bad1.yaml"
    bad_session.write_text(
        yaml.safe_dump(
            {
                "benchmark": {"kind": "sniah", "count": 1, "haystack_tokens": 256},
                "backend": {"kind": "rule", "strategy": "grep-needle"},
                "session": "not a mapping",
                "cost_model": str(tmp_path / "costs.yaml"),
            }
        ),
        encoding="utf-8",
    )
    assert main(["run", str(bad_session)]) == EXIT_CONFIG

    not_yaml = tmp_path / "bad2.yaml"
    not_yaml.write_text("benchmark: [unclosed", encoding="utf-8")
    assert main(["run", str(not_yaml)]) == EXIT_CONFIG


def test_dotenv_loader(tmp_path, monkeypatch):
    monkeypatch.delenv("FORGE_TEST_TOKEN", raising=False)
    env_file = tmp_path / ".env"
    env_file.write_text(
        "# comment\nFORGE_TEST_TOKEN='abc123'\nEMPTYLINE_FOLLOWS\n\n",
        encoding="utf-8",
    )
    load_dotenv(env_file)
    import os

    assert os.environ.get("FORGE_TEST_TOKEN") == "abc123"
    monkeypatch.delenv("FORGE_TEST_TOKEN", raising=False)

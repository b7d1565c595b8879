"""Experiment grid runner: config parsing, resume, reports, determinism."""

import csv
import dataclasses
import json

import pytest

from prunelab.errors import ConfigError
from prunelab.harness import (
    ExperimentConfig,
    ResultRow,
    config_hash,
    emit_report,
    emit_rows,
    format_markdown,
    grid_cells,
    load_config,
    parse_rows,
    pipeline_label,
    run_experiment,
    summarize,
)
from prunelab.pipelines import TrainConfig

TINY = {
    "arch": "mlp-4",
    "dataset": {"kind": "synthetic-blobs", "classes": 3, "dim": 4, "n": 60, "seed": 9},
    "pipelines": [{"kind": "random"}, {"kind": "snip"}],
    "sparsities": [0.5],
    "checks": ["none", "rearrange"],
    "seeds": [0, 1],
    "train": {"epochs": 2, "batch_size": 16, "seed": 0},
}


def tiny_config(**overrides):
    d = {**TINY, **overrides}
    return ExperimentConfig.from_dict(d)


def test_config_round_trips_through_dict():
    cfg = tiny_config()
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert cfg.train == TrainConfig(epochs=2, batch_size=16, seed=0)


def test_config_rejects_bad_shapes():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({**TINY, "sparsity": [0.5]})
    with pytest.raises(ConfigError, match="missing required key"):
        ExperimentConfig.from_dict({k: v for k, v in TINY.items() if k != "arch"})
    with pytest.raises(ConfigError, match="unknown arch"):
        tiny_config(arch="resnet")
    with pytest.raises(ConfigError, match="needs a kind"):
        tiny_config(pipelines=[{"schedule": "smart"}])
    with pytest.raises(ConfigError, match="unknown schedule"):
        tiny_config(pipelines=[{"kind": "random", "schedule": "spiral"}])
    with pytest.raises(ConfigError, match="unknown check"):
        tiny_config(checks=["mirror"])
    with pytest.raises(ConfigError, match="outside"):
        tiny_config(sparsities=[1.0])
    with pytest.raises(ConfigError):
        tiny_config(seeds=[])


def test_config_hash_ignores_key_order_but_not_content():
    cfg = tiny_config()
    digest = config_hash(cfg)
    assert len(digest) == 64
    reordered = ExperimentConfig.from_dict(dict(reversed(list(TINY.items()))))
    assert config_hash(reordered) == digest
    assert config_hash(tiny_config(seeds=[0, 2])) != digest


def test_pipeline_labels_and_grid_order():
    assert pipeline_label({"kind": "random", "schedule": "balanced"}) == "random-balanced"
    assert pipeline_label({"kind": "imp", "mode": "reset"}) == "imp-reset"
    assert pipeline_label({"kind": "snip", "name": "baseline"}) == "baseline"
    cfg = tiny_config()
    cells = grid_cells(cfg)
    assert [(label, check, seed) for _, label, check, _, seed in cells] == [
        ("random", "none", 0), ("random", "none", 1),
        ("random", "rearrange", 0), ("random", "rearrange", 1),
        ("snip", "none", 0), ("snip", "none", 1),
        ("snip", "rearrange", 0), ("snip", "rearrange", 1),
    ]
    with pytest.raises(ConfigError, match="collide"):
        grid_cells(tiny_config(pipelines=[{"kind": "random"}, {"kind": "random"}]))


def test_rows_round_trip_through_csv(tmp_path):
    rows = [
        ResultRow("snip", "none", 0.5, 0, 91.25, (0.625, 0.3), 1.5, ""),
        ResultRow("snip", "rearrange", 0.5, 1, None, (), 0.25, "failed:DomainError"),
    ]
    path = tmp_path / "rows.csv"
    emit_rows(rows, str(path))
    assert parse_rows(str(path)) == rows
    (tmp_path / "mangled.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError, match="expected columns"):
        parse_rows(str(tmp_path / "mangled.csv"))


def test_load_config_reads_json(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(TINY))
    assert load_config(str(path)) == tiny_config()
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))


def test_summarize_means_and_sample_std():
    rows = [
        ResultRow("a", "none", 0.5, s, acc, (), 0.0)
        for s, acc in [(0, 90.0), (1, 92.0), (2, 94.0)]
    ]
    rows.append(ResultRow("a", "none", 0.9, 0, None, (), 0.0, "failed:DomainError"))
    summary = summarize(rows)
    assert summary[0].mean == pytest.approx(92.0)
    assert summary[0].std == pytest.approx(2.0)
    assert summary[0].n == 3
    assert summary[1].mean is None and summary[1].n == 0


def test_markdown_table_layout():
    rows = [
        ResultRow("a", "none", 0.5, 0, 90.0, (), 0.0),
        ResultRow("a", "none", 0.5, 1, 94.0, (), 0.0),
        ResultRow("a", "rearrange", 0.5, 0, None, (), 0.0, "failed:DomainError"),
    ]
    text = format_markdown(rows)
    lines = text.splitlines()
    assert lines[0] == "## a"
    assert "| check | 0.5 |" in lines
    assert "| none | 92.00±2.83 |" in lines
    assert "| rearrange | failed |" in lines


def test_emit_report_formats(tmp_path):
    rows = [ResultRow("a", "none", 0.5, 0, 90.0, (0.5,), 0.1)]
    csv_path = emit_report(rows, "csv", str(tmp_path / "r.csv"))
    assert parse_rows(csv_path) == rows
    md_path = emit_report(rows, "markdown-table", str(tmp_path / "r.md"))
    assert "## a" in open(md_path).read()
    with pytest.raises(ConfigError, match="unknown report format"):
        emit_report(rows, "yaml", str(tmp_path / "r.yaml"))


def run_tiny(tmp_path, name, **overrides):
    cfg = tiny_config(output_dir=str(tmp_path / name), **overrides)
    return cfg, run_experiment(cfg)


def test_run_experiment_covers_the_grid(tmp_path, monkeypatch):
    monkeypatch.delenv("PRUNELAB_OUTPUT_DIR", raising=False)
    cfg, rows = run_tiny(tmp_path, "grid")
    assert len(rows) == 8
    assert all(r.accuracy is not None for r in rows)
    assert all(0.0 <= r.accuracy <= 100.0 for r in rows)
    digest = config_hash(cfg)[:12]
    out = tmp_path / "grid"
    assert (out / f"rows-{digest}.csv").exists()
    assert (out / f"report-{digest}.csv").exists()
    assert (out / f"report-{digest}.md").exists()
    assert parse_rows(str(out / f"rows-{digest}.csv")) == rows


def test_run_experiment_resumes_finished_cells(tmp_path, monkeypatch):
    monkeypatch.delenv("PRUNELAB_OUTPUT_DIR", raising=False)
    cfg, first = run_tiny(tmp_path, "resume")
    digest = config_hash(cfg)[:12]
    rows_path = tmp_path / "resume" / f"rows-{digest}.csv"
    head = parse_rows(str(rows_path))[:5]
    emit_rows(head, str(rows_path))
    second = run_experiment(cfg)
    assert second[:5] == first[:5]  # resumed rows keep their original timing

    def sans_seconds(rows):
        return [dataclasses.replace(r, seconds=0.0) for r in rows]

    assert sans_seconds(second) == sans_seconds(first)
    redone = parse_rows(str(rows_path))
    assert len(redone) == 8
    assert redone[:5] == head


def test_run_experiment_output_dir_env_override(tmp_path, monkeypatch):
    target = tmp_path / "env-home"
    monkeypatch.setenv("PRUNELAB_OUTPUT_DIR", str(target))
    cfg = tiny_config(output_dir=str(tmp_path / "ignored"))
    run_experiment(cfg)
    assert target.exists()
    assert not (tmp_path / "ignored").exists()


def strip_seconds(path):
    with open(path, newline="") as f:
        recs = list(csv.DictReader(f))
    for r in recs:
        r.pop("seconds")
    return recs


def test_identical_configs_reproduce_every_cell(tmp_path, monkeypatch):
    cfg = tiny_config()
    digest = config_hash(cfg)[:12]
    monkeypatch.setenv("PRUNELAB_OUTPUT_DIR", str(tmp_path / "rep-a"))
    run_experiment(cfg)
    monkeypatch.setenv("PRUNELAB_OUTPUT_DIR", str(tmp_path / "rep-b"))
    run_experiment(cfg)
    a = strip_seconds(str(tmp_path / "rep-a" / f"rows-{digest}.csv"))
    b = strip_seconds(str(tmp_path / "rep-b" / f"rows-{digest}.csv"))
    assert a == b


def test_run_experiment_records_failures_as_rows(tmp_path, monkeypatch):
    monkeypatch.delenv("PRUNELAB_OUTPUT_DIR", raising=False)
    # budget below the pinned output quota cannot be scheduled
    cfg, rows = run_tiny(
        tmp_path, "fail",
        pipelines=[{"kind": "random"}], sparsities=[0.999], checks=["none"],
    )
    assert all(r.accuracy is None for r in rows)
    assert all(r.flags.startswith("failed:") for r in rows)
    summary = summarize(rows)
    assert summary[0].mean is None

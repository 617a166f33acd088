import json
from pathlib import Path

import pytest

from d2k_pipeline.cli import main

from conftest import write_pipeline_config, write_two_link_model


@pytest.fixture()
def model_file(tmp_path):
    return write_two_link_model(tmp_path / "two_link.yaml")


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_generate_writes_jsonl(tmp_path, model_file, capsys):
    out = tmp_path / "records.jsonl"
    code, stdout, _ = run_cli(
        capsys, "generate", "--model", str(model_file),
        "--instance-id", "llt-arm", "--site", "llt", "--purpose", "train",
        "--count", "2", "--seed", "7", "--n-waypoints", "3",
        "--output", str(out))
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2
    doc = json.loads(lines[0])
    assert doc["purpose"] == "train"
    assert doc["instance_id"] == "llt-arm"
    assert list(doc["samples"][0]) == ["q", "qd", "qdd", "tau"]


def test_generate_same_seed_same_payload(tmp_path, model_file, capsys):
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        out = tmp_path / name
        run_cli(capsys, "generate", "--model", str(model_file),
                "--instance-id", "i", "--site", "s", "--purpose", "train",
                "--count", "1", "--seed", "3", "--output", str(out))
        outs.append(json.loads(out.read_text()))
    a, b = outs
    assert a["samples"] == b["samples"]
    assert a["record_id"] != b["record_id"]  # fresh identity per run


def test_store_cli_round_trip(tmp_path, model_file, capsys):
    store_dir = tmp_path / "store"
    records = tmp_path / "records.jsonl"
    run_cli(capsys, "generate", "--model", str(model_file), "--instance-id",
            "llt-arm", "--site", "llt", "--purpose", "train", "--count", "2",
            "--n-waypoints", "3", "--output", str(records))

    code, _, _ = run_cli(capsys, "store", "init", "--store-dir",
                         str(store_dir), "--model", str(model_file))
    assert code == 0
    code, stdout, _ = run_cli(capsys, "store", "ingest", "--store-dir",
                              str(store_dir), str(records))
    assert code == 0
    ids = stdout.strip().splitlines()
    assert len(ids) == 2

    code, stdout, _ = run_cli(capsys, "store", "query", "--store-dir",
                              str(store_dir), "--purpose", "train")
    assert len(stdout.strip().splitlines()) == 2
    # byte-identical round trip through the CLI
    assert sorted(stdout.strip().splitlines()) == sorted(
        records.read_text().strip().splitlines())

    code, stdout, _ = run_cli(capsys, "store", "stats", "--store-dir",
                              str(store_dir))
    stats = json.loads(stdout)
    assert stats["total_trajectories"] == 2

    code, stdout, _ = run_cli(capsys, "store", "histogram", "--store-dir",
                              str(store_dir), "--joint-index", "0",
                              "--n-bins", "6")
    doc = json.loads(stdout)
    assert sum(doc["counts"]) == stats["total_measurements_per_axis"]

    code, stdout, _ = run_cli(capsys, "store", "create-view", "--store-dir",
                              str(store_dir), "--view-id", "v1",
                              "--purpose", "train", "--projection",
                              "record_id,tau")
    assert stdout.strip() == "v1"
    code, stdout, _ = run_cli(capsys, "store", "resolve-view", "--store-dir",
                              str(store_dir), "--view-id", "v1")
    rows = json.loads(stdout)
    assert len(rows) == 2


def test_store_dir_env_fallback(tmp_path, model_file, capsys, monkeypatch):
    store_dir = tmp_path / "env-store"
    monkeypatch.setenv("D2K_STORE_DIR", str(store_dir))
    code, stdout, _ = run_cli(capsys, "store", "stats")
    assert code == 0
    assert json.loads(stdout)["total_trajectories"] == 0
    monkeypatch.delenv("D2K_STORE_DIR")
    code, _, err = run_cli(capsys, "store", "stats")
    assert code == 2
    assert "D2K_STORE_DIR" in err


def test_sweep_status_cli(tmp_path, capsys):
    code, stdout, _ = run_cli(capsys, "sweep", "status", "--repo-dir",
                              str(tmp_path / "repo"))
    assert code == 0
    assert json.loads(stdout) == {"targets": {}, "rounds": []}


def test_pipeline_cli_flow(tmp_path, model_file, capsys, monkeypatch):
    config_path = write_pipeline_config(tmp_path, model_file)
    code, stdout, _ = run_cli(capsys, "site", "run", "--config",
                              str(config_path), "--all")
    assert code == 0
    assert "ingested 6 record(s)" in stdout

    monkeypatch.setenv("D2K_CONFIG", str(config_path))
    code, stdout, _ = run_cli(capsys, "nightly", "--once")
    assert code == 0
    report = json.loads(stdout)
    assert [s["step"] for s in report["steps"]] == ["statistics", "sweep", "gate"]

    code, stdout, _ = run_cli(capsys, "k2d", "scan", "--config",
                              str(config_path))
    assert code == 0
    json.loads(stdout)  # valid JSON directive list


def test_missing_config_is_error(capsys, monkeypatch):
    monkeypatch.delenv("D2K_CONFIG", raising=False)
    code, _, err = run_cli(capsys, "nightly", "--once")
    assert code == 2
    assert "D2K_CONFIG" in err


def test_report_requires_csvs(tmp_path, capsys):
    code, _, err = run_cli(capsys, "report", "--report-dir", str(tmp_path))
    assert code == 2
    assert "no benchmark CSVs" in err

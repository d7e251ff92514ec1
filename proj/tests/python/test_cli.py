import json
import os
import subprocess

import pytest

CLI = os.environ.get("AUDITALLOC_CLI")
pytestmark = pytest.mark.skipif(not CLI, reason="AUDITALLOC_CLI not set")


def cli(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)


def test_gen_and_run_from_csv(tmp_path):
    (tmp_path / "pop.json").write_text(json.dumps({"n_records": 2000, "seed": 3}))
    r = cli("gen", "--config", tmp_path / "pop.json", "--out", tmp_path / "pop.csv")
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "pop.csv").read_text().count("\n") == 2001

    cfg = {"population": {"load": "pop.csv"},
           "models": [{"label": "LDA", "model": {"family": "LinearDiscriminant"}}],
           "output_dir": "unused"}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    r = cli("run", "--config", tmp_path / "run.json", "--out", tmp_path / "out")
    assert r.returncode == 0, r.stderr
    for name in ["metrics.csv", "audit_rate_by_bucket.csv", "disparity.csv",
                 "allocation.csv", "manifest.json"]:
        assert (tmp_path / "out" / name).exists()
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["warnings"] == []


def test_exit_codes(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps(
        {"population": {"generate": {}}, "budget": {"kind": "rate", "k": 0}}))
    assert cli("run", "--config", tmp_path / "bad.json", "--out", tmp_path / "o").returncode == 1
    assert cli("run", "--config", tmp_path / "missing.json", "--out", tmp_path / "o").returncode == 1
    assert cli("suite", "bogus", "--out", tmp_path / "s").returncode == 1
    assert cli("frobnicate").returncode == 1
    r = cli("suite", "solver-oracle", "--out", tmp_path / "s")
    assert r.returncode == 0
    assert r.stdout.count("PASS") == 2

import csv
import math

import pytest

import auditalloc as aa


def small_config(seed=5):
    return {
        "population": {"generate": {"n_records": 3000}},
        "seed": seed,
        "models": [
            {"label": "Logit", "model": {"family": "Logistic"},
             "target": {"kind": "classification"}},
            {"label": "GB-reg", "model": {"family": "GradientBoost",
                                          "hyperparameters": {"n_rounds": 15}},
             "target": {"kind": "regression"}},
        ],
    }


def test_run_experiment_writes_artifacts(tmp_path):
    res = aa.run_experiment(small_config(), tmp_path)
    labels = [m["label"] for m in res["models"]]
    assert labels == ["Oracle", "Logit", "GB-reg"]
    oracle = res["models"][0]
    assert oracle["oracle_overlap"] == pytest.approx(1.0)
    assert oracle["no_change_rate"] == 0.0
    assert all(m["revenue"] <= oracle["revenue"] for m in res["models"])
    assert len(res["config_hash"]) == 16
    with open(tmp_path / "metrics.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["label"] for r in rows] == labels
    assert float(rows[1]["revenue"]) == res["models"][1]["revenue"]


def test_determinism_and_hash():
    a = aa.run_experiment(small_config())
    b = aa.run_experiment(small_config())
    assert a == b
    assert aa.config_hash(small_config()) == a["config_hash"]
    assert aa.config_hash(small_config(6)) != a["config_hash"]
    canon = aa.canonical_config(small_config())
    assert aa.config_hash(canon) == a["config_hash"]


def test_config_errors_raise():
    bad = small_config()
    bad["budget"] = {"kind": "rate", "k": 2.0}
    with pytest.raises(aa.ConfigError):
        aa.run_experiment(bad)
    with pytest.raises(aa.ConfigError):
        aa.config_hash({"population": {"generate": {}}, "unknown": 1})
    assert issubclass(aa.ConfigError, aa.Error)


def test_allocate():
    scores = [5.0, 4.0, 3.0, 2.0]
    weights = [1.0, 1.0, 1.0, 1.0]
    alpha = aa.allocate(scores, weights, [1, 1, 2, 2], "topk", 0.375)
    assert alpha == pytest.approx([1.0, 0.5, 0.0, 0.0])
    mono = aa.allocate(scores, weights, [1, 1, 2, 2], "monotone", 0.5)
    assert math.isclose(sum(mono), 2.0)
    assert sum(mono[2:]) >= sum(mono[:2]) - 1e-12
    roi = aa.allocate(scores, weights, [1, 1, 1, 1], "roi", 3.0, costs=[1, 1, 1, 1])
    assert roi == pytest.approx([1.0, 1.0, 1.0, 0.0])
    with pytest.raises(aa.Error):
        aa.allocate(scores, weights[:2], [1, 1, 2, 2], "topk", 0.5)
    with pytest.raises(aa.BudgetError):
        aa.allocate(scores, weights, [1, 1, 2, 2], "topk", 1.5)


def test_suite(tmp_path):
    assert "lemma-properties" in aa.suite_names
    r = aa.run_suite("lemma-properties", tmp_path)
    assert r["passed"] and r["name"] == "lemma-properties"
    assert (tmp_path / "summary.csv").exists()
    with pytest.raises(aa.ConfigError):
        aa.run_suite("nope", tmp_path)

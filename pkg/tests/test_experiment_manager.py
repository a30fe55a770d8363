import csv
import json

import pytest

from evolve_merge.experiment_manager import ExperimentManager
from evolve_merge.models import ModelConfig
from evolve_merge.persistence import SUMMARY_HEADER, build_config, load_record, validate_run_directory


@pytest.fixture
def config(experiment_dict):
    experiment_dict["seeds"] = [0, 1]
    return build_config(experiment_dict)


@pytest.fixture
def models():
    common = {"network": {"layer_sizes": [4, 2]}, "generations_budget": 2, "es": {"population_size": 4}}
    return {
        "rules_3": ModelConfig(name="rules_3", kind="FIXED_RULES", n_rules=3, **common),
        "plain_static": ModelConfig(name="plain_static", kind="PLAIN_STATIC", **common),
    }


def test_run_directories(config, tmp_path):
    manager = ExperimentManager(tmp_path / "runs")
    record = manager.train(config, seed=1)
    run_dir = tmp_path / "runs" / "tiny_static" / "1"
    assert manager.run_dir("tiny_static", 1) == run_dir
    assert load_record(run_dir / "record.json").model_dump() == record.model_dump()
    assert validate_run_directory(run_dir) == ["record.json", "metrics.csv", "config.yaml"]


def test_evaluation_and_rule_export_files(config, models, tmp_path):
    manager = ExperimentManager(tmp_path / "runs")
    run_config = config.model_copy(update={"model": models["rules_3"]})
    trained = manager.train(run_config, seed=0).trained_model()
    run_dir = manager.run_dir("rules_3", 0)

    table = manager.evaluate_run(trained, run_dir, [], n_episodes=2, reward_mode=config.evaluation.reward_mode,
                                 base_seed=5)
    payload = json.loads((run_dir / "eval.json").read_text(encoding="utf-8"))
    assert payload["format_version"] == 1
    assert payload["standard_score"] == table.standard_score

    samples = manager.export_rules(trained, run_dir, top_k=2)
    with open(run_dir / "rule_updates.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert len(rows) - 1 == sum(len(sample.deltas) for sample in samples)
    checked = validate_run_directory(run_dir)
    assert {"eval.csv", "eval.json", "rule_updates.csv", "rule_summary.csv"} <= set(checked)


def test_experiment_matrix_report(config, models, tmp_path):
    manager = ExperimentManager(tmp_path / "runs")
    rows = manager.run_matrix(models, config)
    assert [row["model"] for row in rows] == ["rules_3", "plain_static"]
    assert [row["parameters"] for row in rows] == [15, 8]
    assert all(row["replicates"] == 2 for row in rows)

    with open(tmp_path / "runs" / "summary.csv", newline="", encoding="utf-8") as f:
        table = list(csv.reader(f))
    assert table[0] == SUMMARY_HEADER
    assert [line[0] for line in table[1:]] == ["rules_3", "plain_static"]
    assert float(table[1][3]) == rows[0]["orig_mean"]

    report = json.loads((tmp_path / "runs" / "robustness.json").read_text(encoding="utf-8"))
    assert set(report["retention"]) == {"rules_3", "plain_static"}
    comparison = report["comparison"]
    assert (comparison["plastic_model"], comparison["static_model"]) == ("rules_3", "plain_static")
    assert comparison["replicates"] == 2
    for name in models:
        for seed in (0, 1):
            assert (tmp_path / "runs" / name / str(seed) / "eval.json").exists()


def test_comparison_needs_both_models(config, models, tmp_path):
    manager = ExperimentManager(tmp_path / "runs")
    manager.run_matrix({"plain_static": models["plain_static"]}, config, seeds=[0])
    report = json.loads((tmp_path / "runs" / "robustness.json").read_text(encoding="utf-8"))
    assert report["comparison"] is None

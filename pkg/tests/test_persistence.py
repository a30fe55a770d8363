import csv
import json
from pathlib import Path

import numpy as np
import pytest

from evolve_merge.environments import RewardMode
from evolve_merge.exceptions import ConfigurationError, FormatError
from evolve_merge.experiment_manager import ExperimentManager
from evolve_merge.persistence import (
    METRICS_HEADER,
    apply_overrides,
    build_config,
    load_checkpoint,
    load_config,
    load_record,
    load_trained_model,
    save_checkpoint,
    save_record,
    validate_run_directory,
    write_metrics_csv,
)
from evolve_merge.records import GenerationMetrics
from evolve_merge.training import train


def test_load_config_fills_defaults(write_yaml, experiment_dict):
    config = load_config(write_yaml(experiment_dict))
    assert config.model.name == "tiny_static"
    assert config.evaluation.base_seed == 1000
    assert config.evaluation.reward_mode is RewardMode.DISTANCE_ONLY
    assert config.checkpoint_every is None


def test_default_layer_sizes_follow_the_environment(write_yaml):
    config = load_config(write_yaml({"model": {"kind": "ABC"}, "env": {"name": "assoc"}}))
    assert config.model.network.layer_sizes == [4, 128, 64, 2]
    assert config.evaluation.grid == "standard"
    walker = load_config(write_yaml({"model": {"kind": "SMALL_STATIC"}}))
    assert walker.model.network.layer_sizes == [28, 32, 16, 8]


def test_unknown_keys_are_rejected(write_yaml, experiment_dict):
    experiment_dict["evaluation"]["colour"] = "blue"
    with pytest.raises(ConfigurationError, match="colour"):
        load_config(write_yaml(experiment_dict))


def test_overrides(write_yaml, experiment_dict):
    config = load_config(write_yaml(experiment_dict), ["model.es.population_size=12", "seeds=[3, 4]"])
    assert config.model.es.population_size == 12
    assert config.seeds == [3, 4]
    assert experiment_dict["model"]["es"]["population_size"] == 8


def test_override_creates_missing_sections():
    data = apply_overrides({"model": {"kind": "ABC"}}, ["env.episode_steps=50"])
    assert data["env"] == {"episode_steps": 50}


def test_malformed_override(experiment_dict):
    with pytest.raises(ConfigurationError):
        build_config(experiment_dict, ["model.generations_budget"])
    with pytest.raises(ConfigurationError):
        build_config(experiment_dict, ["=3"])


def test_network_must_match_the_environment(write_yaml, experiment_dict):
    experiment_dict["model"]["network"]["layer_sizes"] = [28, 8]
    with pytest.raises(ConfigurationError, match="environment"):
        load_config(write_yaml(experiment_dict))


def test_missing_config_file_is_named(tmp_path):
    path = tmp_path / "absent.yaml"
    with pytest.raises(ConfigurationError, match="absent.yaml"):
        load_config(path)


def test_checkpoint_round_trip_and_version_check(static_config, assoc_env, tmp_path):
    train(static_config, assoc_env, replicate_seed=0, checkpoint_every=2, checkpoint_dir=tmp_path)
    path = tmp_path / "checkpoints" / "gen_00002.json"
    checkpoint = load_checkpoint(path)
    assert checkpoint.generation == 2
    assert len(checkpoint.metrics) == 2
    assert checkpoint.config == static_config

    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["format_version"] = 2
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(FormatError, match="format_version"):
        load_checkpoint(path)


@pytest.mark.parametrize("content", ["{not json", "[1, 2]", '{"format_version": 1}'])
def test_corrupt_checkpoints(tmp_path, content):
    path = tmp_path / "checkpoint.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_metrics_csv_keeps_full_precision(tmp_path):
    metrics = [GenerationMetrics(generation=0, pop_mean=0.1 + 0.2, pop_max=1 / 3, sigma=0.1, lr=0.03)]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, metrics)
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == METRICS_HEADER
    assert float(rows[1][1]) == 0.1 + 0.2
    assert float(rows[1][2]) == 1 / 3
    assert rows[1][5] == ""


def test_empty_config_gets_the_default_es_settings():
    es = build_config({"model": {"kind": "ALPHA_ABCD"}}).model.es
    assert es.model_dump() == {
        "population_size": 500,
        "lr0": 0.1,
        "lr_decay": 0.9999,
        "lr_limit": 0.001,
        "sigma0": 0.1,
        "sigma_decay": 0.999,
        "sigma_limit": 0.01,
        "weight_decay": 0.0,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
    }


def test_saving_a_loaded_artifact_reproduces_the_file(merge_config, assoc_env, tmp_path):
    record = train(merge_config, assoc_env, replicate_seed=2, checkpoint_every=5, checkpoint_dir=tmp_path)
    save_record(tmp_path / "record.json", record)
    save_record(tmp_path / "again.json", load_record(tmp_path / "record.json"))
    assert (tmp_path / "again.json").read_bytes() == (tmp_path / "record.json").read_bytes()

    save_checkpoint(tmp_path / "again_checkpoint.json", load_checkpoint(tmp_path / "checkpoint.json"))
    assert (tmp_path / "again_checkpoint.json").read_bytes() == (tmp_path / "checkpoint.json").read_bytes()


def test_record_round_trip(static_config, assoc_env, tmp_path):
    record = train(static_config, assoc_env, replicate_seed=1)
    save_record(tmp_path / "record.json", record)
    loaded = load_record(tmp_path / "record.json")
    assert loaded.model_dump() == record.model_dump()


def test_run_directory_validation(experiment_dict, tmp_path):
    manager = ExperimentManager(tmp_path / "runs")
    config = build_config(experiment_dict, ["checkpoint_every=1"])
    manager.train(config, seed=0)
    run_dir = manager.run_dir("tiny_static", 0)
    checked = validate_run_directory(run_dir)
    assert {"record.json", "metrics.csv", "config.yaml", "checkpoint.json"} <= set(checked)
    assert "checkpoints/gen_00003.json" in checked

    text = (run_dir / "metrics.csv").read_text(encoding="utf-8")
    (run_dir / "metrics.csv").write_text(text.replace("pop_max", "best"), encoding="utf-8")
    with pytest.raises(FormatError, match="metrics.csv"):
        validate_run_directory(run_dir)


def test_empty_run_directory_is_invalid(tmp_path):
    with pytest.raises(FormatError):
        validate_run_directory(tmp_path)


def test_trained_model_from_checkpoint_or_run_directory(experiment_dict, tmp_path):
    manager = ExperimentManager(tmp_path / "runs")
    config = build_config(experiment_dict, ["checkpoint_every=3"])
    record = manager.train(config, seed=0)
    run_dir = manager.run_dir("tiny_static", 0)

    from_dir = load_trained_model(run_dir)
    assert np.array_equal(from_dir.genome, np.array(record.final_genome))
    from_checkpoint = load_trained_model(run_dir / "checkpoint.json")
    assert np.array_equal(from_checkpoint.genome, from_dir.genome)
    assert from_checkpoint.config == from_dir.config

    with pytest.raises(FormatError):
        load_trained_model(tmp_path / "nowhere")


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.yaml")),
                         ids=lambda path: path.name)
def test_shipped_configs_load(path):
    config = load_config(path)
    assert config.model.network.obs_dim == config.env.obs_dim

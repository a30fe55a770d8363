"""Shared fixtures: desk-scale models on short episodes."""

from pathlib import Path
from typing import Any, Dict

import pytest
import yaml

from evolve_merge.environments import EnvConfig
from evolve_merge.models import ModelConfig


@pytest.fixture
def assoc_env() -> EnvConfig:
    return EnvConfig(name="assoc", episode_steps=10, n_patterns=4, assoc_act_dim=2, task_seed=3)


@pytest.fixture
def walker_env() -> EnvConfig:
    return EnvConfig(name="segwalker", episode_steps=30)


@pytest.fixture
def static_config() -> ModelConfig:
    return ModelConfig(
        name="tiny_static",
        kind="PLAIN_STATIC",
        network={"layer_sizes": [4, 2]},
        generations_budget=3,
        es={"population_size": 8},
    )


@pytest.fixture
def merge_config() -> ModelConfig:
    # 112 synapses: merges to 56, 28 and 14 rules at generations 2, 4 and 6
    return ModelConfig(
        name="tiny_merge",
        kind="EVOLVE_MERGE",
        network={"layer_sizes": [4, 8, 8, 2]},
        schedule={"first_merge_gen": 2, "merge_interval": 2, "floor": 14, "kmeans_n_init": 3},
        generations_budget=10,
        es={"population_size": 16},
    )


@pytest.fixture
def experiment_dict() -> Dict[str, Any]:
    return {
        "model": {
            "name": "tiny_static",
            "kind": "PLAIN_STATIC",
            "network": {"layer_sizes": [4, 2]},
            "generations_budget": 3,
            "es": {"population_size": 8},
        },
        "env": {"name": "assoc", "episode_steps": 10},
        "evaluation": {"grid": "standard", "episodes": 2},
        "seeds": [0],
    }


@pytest.fixture
def write_yaml(tmp_path: Path):
    def write(data: Dict[str, Any], name: str = "config.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path

    return write

#!/usr/bin/env python3
"""
Experiment Configuration
Schema of the YAML experiment files: model, environment, evaluation protocol and replicate seeds.
"""

from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .environments import EnvConfig, RewardMode
from .models import ModelConfig, ModelKind, default_layer_sizes


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grid: str = "paper30"
    episodes: int = Field(default=100, ge=1)
    reward_mode: RewardMode = RewardMode.DISTANCE_ONLY
    base_seed: int = 1000


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelConfig
    env: EnvConfig = Field(default_factory=EnvConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    checkpoint_every: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _size_network_for_env(cls, data: Any) -> Any:
        """Fill in default layer sizes from the environment's observation and action sizes."""
        if not isinstance(data, dict) or not isinstance(data.get("model"), dict):
            return data
        model = data["model"]
        network = model.get("network") or {}
        if "kind" in model and "layer_sizes" not in network:
            env = EnvConfig(**(data.get("env") or {}))
            sizes = default_layer_sizes(ModelKind(model["kind"]), env.obs_dim, env.act_dim)
            data = {**data, "model": {**model, "network": {**network, "layer_sizes": sizes}}}
        return data

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ExperimentConfig":
        network = self.model.network
        if (network.obs_dim, network.act_dim) != (self.env.obs_dim, self.env.act_dim):
            raise ValueError(
                f"network maps {network.obs_dim} inputs to {network.act_dim} outputs but environment "
                f"'{self.env.name}' has {self.env.obs_dim} observations and {self.env.act_dim} actions"
            )
        if self.env.name == "assoc" and self.evaluation.grid != "standard":
            self.evaluation = self.evaluation.model_copy(update={"grid": "standard"})
        return self

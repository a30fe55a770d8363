#!/usr/bin/env python3
"""
Model Registry
Model kinds, merge schedules, the twelve baseline configurations, parameter counting
and construction of controllers from genomes.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .environments import EnvConfig
from .es import EsConfig
from .exceptions import ConfigurationError, ModelKindError
from .network import FeedForwardNetwork, NetworkSpec, RuleVariant
from .rules import RuleSet, genome_to_rules, init_rules, rules_to_genome

DEFAULT_HIDDEN_SIZES = [128, 64]
SMALL_HIDDEN_SIZES = [32, 16]


class ModelKind(str, Enum):
    PLAIN_STATIC = "PLAIN_STATIC"
    SMALL_STATIC = "SMALL_STATIC"
    NOISY_STATIC = "NOISY_STATIC"
    ABC = "ABC"
    ALPHA_ABCD = "ALPHA_ABCD"
    FIXED_RULES = "FIXED_RULES"
    EVOLVE_MERGE = "EVOLVE_MERGE"

    @property
    def plastic(self) -> bool:
        return self not in (ModelKind.PLAIN_STATIC, ModelKind.SMALL_STATIC, ModelKind.NOISY_STATIC)


def default_layer_sizes(kind: ModelKind, obs_dim: int = 28, act_dim: int = 8) -> List[int]:
    hidden = SMALL_HIDDEN_SIZES if kind is ModelKind.SMALL_STATIC else DEFAULT_HIDDEN_SIZES
    return [obs_dim, *hidden, act_dim]


class MergeSchedule(BaseModel):
    model_config = ConfigDict(extra="forbid")

    first_merge_gen: int = Field(default=600, ge=1)
    merge_interval: int = Field(default=200, ge=1)
    floor: int = Field(default=384, ge=1)
    kmeans_n_init: int = Field(default=10, ge=1)

    def merge_points(self, initial_rules: int, budget: int) -> List[Tuple[int, int]]:
        """(generation, rule count after the merge) for every halving that fits in the budget."""
        points = []
        generation, count = self.first_merge_gen, initial_rules
        while generation < budget and count // 2 >= max(self.floor, 1):
            count //= 2
            points.append((generation, count))
            generation += self.merge_interval
        return points


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = ""
    kind: ModelKind
    network: NetworkSpec = Field(default_factory=NetworkSpec)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    n_rules: Optional[int] = Field(default=None, ge=1)
    schedule: MergeSchedule = Field(default_factory=MergeSchedule)
    es: EsConfig = Field(default_factory=EsConfig)
    generations_budget: int = Field(default=1600, ge=0)
    episodes_per_candidate: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _default_network(cls, data: Any) -> Any:
        if isinstance(data, dict) and "kind" in data:
            network = data.get("network")
            if isinstance(network, dict) and "layer_sizes" not in network:
                data = {**data, "network": {**network, "layer_sizes": default_layer_sizes(ModelKind(data["kind"]))}}
            elif network is None:
                data = {**data, "network": {"layer_sizes": default_layer_sizes(ModelKind(data["kind"]))}}
        return data

    @model_validator(mode="after")
    def _align_network(self) -> "ModelConfig":
        variant = RuleVariant.ABC if self.kind is ModelKind.ABC else RuleVariant.ABCD_ALPHA
        if self.network.plastic != self.kind.plastic or self.network.rule_variant is not variant:
            self.network = self.network.model_copy(update={"plastic": self.kind.plastic, "rule_variant": variant})
        if self.kind is ModelKind.FIXED_RULES:
            if self.n_rules is None:
                raise ValueError("FIXED_RULES needs n_rules")
            if self.n_rules > self.network.connection_count:
                raise ValueError(
                    f"n_rules={self.n_rules} exceeds the {self.network.connection_count} synapses of the network"
                )
        if not self.name:
            self.name = self.kind.value.lower()
        return self

    @property
    def initial_rule_count(self) -> Optional[int]:
        if not self.kind.plastic:
            return None
        if self.kind is ModelKind.FIXED_RULES:
            return self.n_rules
        return self.network.connection_count

    def merge_points(self) -> List[Tuple[int, int]]:
        if self.kind is not ModelKind.EVOLVE_MERGE:
            return []
        return self.schedule.merge_points(self.initial_rule_count, self.generations_budget)

    @property
    def final_rule_count(self) -> Optional[int]:
        points = self.merge_points()
        return points[-1][1] if points else self.initial_rule_count


def parameter_count(config: ModelConfig) -> int:
    """Trainable parameters of the model at the end of its schedule."""
    if not config.kind.plastic:
        return config.network.connection_count
    return config.final_rule_count * config.network.rule_variant.params_per_rule


def baseline_models(
    obs_dim: int = 28,
    act_dim: int = 8,
    schedule: Optional[MergeSchedule] = None,
    **overrides: Any,
) -> Dict[str, ModelConfig]:
    """The twelve model types compared in the robustness study, keyed by name.

    Args:
        schedule: merge timing shared by the rules_N models; each gets its own floor
        overrides: extra ModelConfig fields applied to every model (budget, es, ...)
    """
    schedule = schedule or MergeSchedule()

    def build(name: str, kind: ModelKind, **fields: Any) -> ModelConfig:
        network = {"layer_sizes": default_layer_sizes(kind, obs_dim, act_dim)}
        return ModelConfig(name=name, kind=kind, network=network, **fields, **overrides)

    models = [
        build("plain_static", ModelKind.PLAIN_STATIC),
        build("small_static", ModelKind.SMALL_STATIC),
        build("noisy_0.05", ModelKind.NOISY_STATIC, noise_sigma=0.05),
        build("noisy_0.1", ModelKind.NOISY_STATIC, noise_sigma=0.1),
        build("500_from_start", ModelKind.FIXED_RULES, n_rules=500),
        build("abc", ModelKind.ABC),
        build("alpha_abcd", ModelKind.ALPHA_ABCD),
    ]
    for floor in (6144, 3072, 1536, 768, 384):
        floored = schedule.model_copy(update={"floor": floor})
        models.append(build(f"rules_{floor}", ModelKind.EVOLVE_MERGE, schedule=floored))
    return {model.name: model for model in models}


def initial_genome(config: ModelConfig, seed: int) -> Tuple[np.ndarray, Optional[RuleSet]]:
    """Initial search mean and, for plastic models, the rule-set template carrying the assignment."""
    if not config.kind.plastic:
        network = FeedForwardNetwork(config.network)
        network.init_weights(seed)
        return network.get_genome_static(), None
    rule_set = init_rules(
        config.initial_rule_count,
        config.network.rule_variant,
        seed,
        config.network.connection_count,
    )
    return rules_to_genome(rule_set), rule_set


def rule_template(variant: RuleVariant, assignment: np.ndarray, n_rules: int) -> RuleSet:
    return RuleSet(variant, np.zeros((n_rules, variant.params_per_rule)), assignment)


class Controller:
    """A network plus, for plastic models, the rule set that adapts it during an episode."""

    def __init__(self, network: FeedForwardNetwork, rule_set: Optional[RuleSet] = None):
        self.network = network
        self.rule_set = rule_set

    @property
    def plastic(self) -> bool:
        return self.rule_set is not None

    def begin_episode(self, weight_seed: int) -> None:
        if self.plastic:
            self.network.init_weights(weight_seed)

    def act(self, obs: np.ndarray) -> np.ndarray:
        return self.network.forward(obs)

    def learn(self, return_deltas: bool = False) -> Optional[List[np.ndarray]]:
        if not self.plastic:
            return None
        return self.network.hebbian_update(self.rule_set, return_deltas=return_deltas)


def build_controller(config: ModelConfig, genome: np.ndarray, template: Optional[RuleSet] = None) -> Controller:
    network = FeedForwardNetwork(config.network)
    if not config.kind.plastic:
        network.set_genome_static(genome)
        return Controller(network)
    if template is None:
        raise ConfigurationError(f"plastic model '{config.name}' needs a rule assignment")
    rule_set = genome_to_rules(genome, template)
    network.bind_rules(rule_set)
    return Controller(network, rule_set)


@dataclass
class TrainedModel:
    """An evaluable artifact: the model config, its environment and the ES mean genome."""

    config: ModelConfig
    env: EnvConfig
    genome: np.ndarray
    assignment: Optional[np.ndarray] = None

    @property
    def name(self) -> str:
        return self.config.name

    def template(self) -> Optional[RuleSet]:
        if not self.config.kind.plastic:
            return None
        if self.assignment is None:
            raise ConfigurationError(f"plastic model '{self.name}' has no rule assignment")
        variant = self.config.network.rule_variant
        return rule_template(variant, self.assignment, self.genome.size // variant.params_per_rule)

    def rule_set(self) -> RuleSet:
        if not self.config.kind.plastic:
            raise ModelKindError(f"model '{self.name}' is static and has no rules")
        return genome_to_rules(self.genome, self.template())

    def controller(self) -> Controller:
        return build_controller(self.config, self.genome, self.template())

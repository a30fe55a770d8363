#!/usr/bin/env python3
"""
Feedforward Networks
Static and plastic tanh networks without biases, plus the per-step Hebbian ABCD update.

Synapse order (also the static genome order and the rule assignment order) is layer-major,
then row-major over each (post, pre) weight matrix.
"""

import logging
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .exceptions import EncodingError, InputShapeError, NetworkStateError

if TYPE_CHECKING:
    from .rules import RuleSet

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_LAYER_SIZES = [28, 128, 64, 8]
INIT_WEIGHT_BOUND = 0.1


class RuleVariant(str, Enum):
    ABCD_ALPHA = "ABCD_ALPHA"
    ABC = "ABC"

    @property
    def params_per_rule(self) -> int:
        return 5 if self is RuleVariant.ABCD_ALPHA else 3

    @property
    def param_names(self) -> Tuple[str, ...]:
        if self is RuleVariant.ABCD_ALPHA:
            return ("A", "B", "C", "D", "alpha")
        return ("A", "B", "C")


class NetworkSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    layer_sizes: List[int] = Field(default_factory=lambda: list(DEFAULT_LAYER_SIZES))
    plastic: bool = False
    rule_variant: RuleVariant = RuleVariant.ABCD_ALPHA
    weight_clip: float = Field(default=5.0, gt=0.0)

    @field_validator("layer_sizes")
    @classmethod
    def _check_layers(cls, sizes: List[int]) -> List[int]:
        if len(sizes) < 2:
            raise ValueError("a network needs at least 2 layers")
        if any(size < 1 for size in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        return sizes

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        """Weight matrix shapes as (post, pre) per adjacent layer pair."""
        return [(post, pre) for pre, post in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    @property
    def connection_count(self) -> int:
        return sum(post * pre for post, pre in self.layer_shapes)

    @property
    def obs_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def act_dim(self) -> int:
        return self.layer_sizes[-1]


class FeedForwardNetwork:
    """Mutable network state owned by one rollout at a time."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.weights: List[np.ndarray] = [np.zeros(shape) for shape in spec.layer_shapes]
        self.last_activations: Optional[List[np.ndarray]] = None
        self._bound_rules: Optional["RuleSet"] = None
        self._bound_arrays: Tuple[Optional[np.ndarray], Optional[np.ndarray]] = (None, None)
        self._layer_params: List[np.ndarray] = []

    def forward(self, obs: np.ndarray) -> np.ndarray:
        """Compute the action for one observation and record every layer output."""
        x = np.asarray(obs, dtype=np.float64)
        if x.shape != (self.spec.obs_dim,):
            raise InputShapeError(
                f"observation has shape {x.shape}, network expects ({self.spec.obs_dim},)"
            )
        activations = [x]
        for w in self.weights:
            x = np.tanh(w @ x)
            activations.append(x)
        self.last_activations = activations
        return x

    def init_weights(self, seed: int) -> None:
        """Draw every weight i.i.d. from Unif(-0.1, 0.1)."""
        rng = np.random.default_rng(seed)
        self.weights = [
            rng.uniform(-INIT_WEIGHT_BOUND, INIT_WEIGHT_BOUND, size=shape)
            for shape in self.spec.layer_shapes
        ]
        self.last_activations = None

    def set_genome_static(self, genome: np.ndarray) -> None:
        """Fill the weights from a flat genome (layer-major, row-major by postsynaptic index)."""
        genome = np.asarray(genome, dtype=np.float64)
        if genome.shape != (self.spec.connection_count,):
            raise EncodingError(
                f"static genome has length {genome.size}, expected {self.spec.connection_count}"
            )
        weights = []
        offset = 0
        for post, pre in self.spec.layer_shapes:
            size = post * pre
            weights.append(genome[offset:offset + size].reshape(post, pre).copy())
            offset += size
        self.weights = weights

    def get_genome_static(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def bind_rules(self, rule_set: "RuleSet") -> None:
        """Gather per-synapse rule parameters into per-layer arrays of shape (post, pre, n_params)."""
        assignment = np.asarray(rule_set.assignment)
        if assignment.shape != (self.spec.connection_count,):
            raise EncodingError(
                f"assignment covers {assignment.size} synapses, network has {self.spec.connection_count}"
            )
        if rule_set.variant is not self.spec.rule_variant:
            raise EncodingError(
                f"rule set variant {rule_set.variant.value} does not match network variant "
                f"{self.spec.rule_variant.value}"
            )
        per_synapse = rule_set.rules[assignment]
        layer_params = []
        offset = 0
        for post, pre in self.spec.layer_shapes:
            size = post * pre
            layer_params.append(per_synapse[offset:offset + size].reshape(post, pre, -1))
            offset += size
        self._layer_params = layer_params
        self._bound_rules = rule_set
        self._bound_arrays = (rule_set.rules, rule_set.assignment)

    def hebbian_update(self, rule_set: "RuleSet", return_deltas: bool = False) -> Optional[List[np.ndarray]]:
        """Apply one ABCD update to every synapse from the last recorded activations, then clamp."""
        if self.last_activations is None:
            raise NetworkStateError("hebbian_update needs activations from a prior forward pass")
        bound_rules, bound_assignment = self._bound_arrays
        if (self._bound_rules is not rule_set or bound_rules is not rule_set.rules
                or bound_assignment is not rule_set.assignment):
            self.bind_rules(rule_set)

        abc_only = self.spec.rule_variant is RuleVariant.ABC
        clip = self.spec.weight_clip
        deltas = [] if return_deltas else None
        for layer, (w, params) in enumerate(zip(self.weights, self._layer_params)):
            o_i = self.last_activations[layer]
            o_j = self.last_activations[layer + 1]
            a, b, c = params[..., 0], params[..., 1], params[..., 2]
            hebb = a * np.outer(o_j, o_i) + b * o_i[np.newaxis, :] + c * o_j[:, np.newaxis]
            if abc_only:
                delta = hebb
            else:
                delta = params[..., 4] * (hebb + params[..., 3])
            w += delta
            np.clip(w, -clip, clip, out=w)
            if deltas is not None:
                deltas.append(delta)
        return deltas

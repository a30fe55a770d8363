#!/usr/bin/env python3
"""
Evolution Strategy
OpenAI-style ES with mirrored sampling, centered-rank fitness shaping,
an Adam step on the mean and per-generation sigma / learning-rate decay.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.stats import rankdata

from .exceptions import ArgumentError, FormatError

# Configure logging
logger = logging.getLogger(__name__)

ES_BLOB_VERSION = 1


class EsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    population_size: int = Field(default=500, ge=2)
    lr0: float = Field(default=0.1, gt=0.0)
    lr_decay: float = Field(default=0.9999, gt=0.0, le=1.0)
    lr_limit: float = Field(default=0.001, ge=0.0)
    sigma0: float = Field(default=0.1, gt=0.0)
    sigma_decay: float = Field(default=0.999, gt=0.0, le=1.0)
    sigma_limit: float = Field(default=0.01, ge=0.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> "EsConfig":
        if self.population_size % 2:
            raise ValueError(f"population_size must be even for mirrored sampling, got {self.population_size}")
        if self.lr_limit > self.lr0:
            raise ValueError("lr_limit must not exceed lr0")
        if self.sigma_limit > self.sigma0:
            raise ValueError("sigma_limit must not exceed sigma0")
        return self


@dataclass
class EsState:
    mu: np.ndarray
    sigma: float
    lr: float
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    generation: int = 0
    rng_seed: int = 0

    @classmethod
    def initial(cls, config: EsConfig, mu0: np.ndarray, rng_seed: int) -> "EsState":
        mu = np.array(mu0, dtype=np.float64)
        return cls(
            mu=mu,
            sigma=config.sigma0,
            lr=config.lr0,
            m=np.zeros_like(mu),
            v=np.zeros_like(mu),
            rng_seed=int(rng_seed),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu.tolist(),
            "sigma": self.sigma,
            "lr": self.lr,
            "m": self.m.tolist(),
            "v": self.v.tolist(),
            "step": self.step,
            "generation": self.generation,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EsState":
        mu = np.asarray(data["mu"], dtype=np.float64)
        m = np.asarray(data["m"], dtype=np.float64)
        v = np.asarray(data["v"], dtype=np.float64)
        if m.shape != mu.shape or v.shape != mu.shape:
            raise FormatError("Adam moments do not match the mean genome")
        return cls(
            mu=mu,
            sigma=float(data["sigma"]),
            lr=float(data["lr"]),
            m=m,
            v=v,
            step=int(data["step"]),
            generation=int(data["generation"]),
            rng_seed=int(data["rng_seed"]),
        )


def centered_ranks(fitnesses: np.ndarray) -> np.ndarray:
    """Map fitnesses to rank/(n-1) - 0.5 with ranks from 0, ties broken by index."""
    fitnesses = np.asarray(fitnesses, dtype=np.float64)
    if fitnesses.ndim != 1 or fitnesses.size < 2:
        raise ArgumentError(f"centered_ranks needs at least 2 fitnesses, got shape {fitnesses.shape}")
    ranks = rankdata(fitnesses, method="ordinal") - 1
    return ranks / (fitnesses.size - 1) - 0.5


class OpenES:
    """Search distribution over flat genomes.

    ask() returns candidates interleaved as mu + sigma*eps_0, mu - sigma*eps_0, mu + sigma*eps_1, ...
    The noise of a generation depends only on (rng_seed, generation).
    """

    def __init__(self, config: EsConfig, mu0: Optional[np.ndarray] = None, rng_seed: int = 0,
                 state: Optional[EsState] = None):
        self.config = config
        if state is None:
            if mu0 is None:
                raise ArgumentError("OpenES needs either an initial mean or a state")
            state = EsState.initial(config, mu0, rng_seed)
        self.state = state

    @property
    def mu(self) -> np.ndarray:
        return self.state.mu

    @property
    def num_params(self) -> int:
        return self.state.mu.size

    def _noise(self) -> np.ndarray:
        rng = np.random.default_rng([self.state.rng_seed, self.state.generation])
        half = rng.standard_normal((self.config.population_size // 2, self.num_params))
        epsilon = np.empty((self.config.population_size, self.num_params))
        epsilon[0::2] = half
        epsilon[1::2] = -half
        return epsilon

    def perturbations(self) -> np.ndarray:
        """The sigma-scaled noise of the current generation, one row per candidate."""
        return self.state.sigma * self._noise()

    def ask(self) -> np.ndarray:
        return self.state.mu[np.newaxis, :] + self.perturbations()

    def tell(self, fitnesses: np.ndarray) -> None:
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        if fitnesses.shape != (self.config.population_size,):
            raise ArgumentError(
                f"expected {self.config.population_size} fitnesses in ask order, got shape {fitnesses.shape}"
            )
        state = self.state
        epsilon = self._noise()
        shaped = centered_ranks(fitnesses)
        if self.config.weight_decay > 0:
            candidates = state.mu[np.newaxis, :] + state.sigma * epsilon
            shaped = shaped - self.config.weight_decay * np.mean(candidates * candidates, axis=1)

        grad = (epsilon.T @ shaped) / (self.config.population_size * state.sigma)

        # Adam on the loss -grad
        beta1, beta2 = self.config.beta1, self.config.beta2
        state.step += 1
        state.m = beta1 * state.m + (1.0 - beta1) * (-grad)
        state.v = beta2 * state.v + (1.0 - beta2) * (grad * grad)
        a = state.lr * np.sqrt(1.0 - beta2 ** state.step) / (1.0 - beta1 ** state.step)
        state.mu = state.mu - a * state.m / (np.sqrt(state.v) + self.config.epsilon)

        state.lr = max(state.lr * self.config.lr_decay, self.config.lr_limit)
        state.sigma = max(state.sigma * self.config.sigma_decay, self.config.sigma_limit)
        state.generation += 1

    def reset_mean(self, mu: np.ndarray) -> None:
        """Restart the search from a new mean (possibly of a new length); lr and sigma keep their values."""
        mu = np.array(mu, dtype=np.float64)
        self.state.mu = mu
        self.state.m = np.zeros_like(mu)
        self.state.v = np.zeros_like(mu)
        self.state.step = 0


def es_checkpoint(es: OpenES) -> bytes:
    payload = {
        "format_version": ES_BLOB_VERSION,
        "config": es.config.model_dump(),
        "state": es.state.to_dict(),
    }
    return json.dumps(payload).encode("utf-8")


def es_restore(blob: bytes) -> OpenES:
    try:
        payload = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt ES checkpoint: {e}") from e
    if not isinstance(payload, dict):
        raise FormatError("corrupt ES checkpoint: expected a JSON object")
    if payload.get("format_version") != ES_BLOB_VERSION:
        raise FormatError(f"unsupported ES checkpoint version: {payload.get('format_version')}")
    try:
        config = EsConfig(**payload["config"])
        state = EsState.from_dict(payload["state"])
    except (KeyError, TypeError, ValidationError) as e:
        raise FormatError(f"corrupt ES checkpoint: {e}") from e
    return OpenES(config, state=state)

#!/usr/bin/env python3
"""
Run Records
Serializable data models for training runs: per-generation metrics, merge events,
final run records and resumable checkpoints.
"""

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from .environments import EnvConfig
from .models import ModelConfig, TrainedModel

FORMAT_VERSION = 1


class GenerationMetrics(BaseModel):
    generation: int
    pop_mean: float
    pop_max: float
    sigma: float
    lr: float
    rule_count: Optional[int] = None


class MergeEvent(BaseModel):
    generation: int
    rules_before: int
    rules_after: int
    params_before: int
    params_after: int


class RunRecord(BaseModel):
    """Outcome of one training run (trunk or branch)."""

    format_version: int = FORMAT_VERSION
    model: str
    lineage: str = "trunk"
    replicate_seed: int
    config: ModelConfig
    env: EnvConfig
    generations_run: int = 0
    metrics: List[GenerationMetrics] = Field(default_factory=list)
    merge_events: List[MergeEvent] = Field(default_factory=list)
    final_genome: List[float]
    assignment: Optional[List[int]] = None
    rule_count: Optional[int] = None
    parameter_count: int

    def trained_model(self) -> TrainedModel:
        assignment = None if self.assignment is None else np.asarray(self.assignment, dtype=np.int64)
        return TrainedModel(
            config=self.config,
            env=self.env,
            genome=np.asarray(self.final_genome, dtype=np.float64),
            assignment=assignment,
        )


class Checkpoint(BaseModel):
    """Everything needed to continue a run bit-identically from a generation boundary."""

    format_version: int = FORMAT_VERSION
    model: str
    lineage: str = "trunk"
    replicate_seed: int
    config: ModelConfig
    env: EnvConfig
    generation: int
    es_state: Dict[str, Any]
    rules: Optional[List[List[float]]] = None
    assignment: Optional[List[int]] = None
    metrics: List[GenerationMetrics] = Field(default_factory=list)
    merge_events: List[MergeEvent] = Field(default_factory=list)

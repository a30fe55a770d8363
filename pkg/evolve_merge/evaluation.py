#!/usr/bin/env python3
"""
Evaluation
Robustness evaluation of trained models on morphology variants, export of per-step
rule updates and classification of update distributions.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from .environments import STANDARD_MORPHOLOGY, MorphologyVariant, RewardMode, make_env
from .exceptions import ArgumentError, ModelKindError
from .models import TrainedModel
from .records import FORMAT_VERSION
from .rollout import episode_scores, evaluation_episode_seeds, run_episode

# Configure logging
logger = logging.getLogger(__name__)

ZERO_TOL = 1e-3
ONE_SIDED_SHARE = 0.9
GAP_SHARE = 0.05
GAP_FRACTION = 0.1
TREND_TOLERANCE = 0.05


class EvaluationRow(BaseModel):
    variant: str
    mean: float
    std: float
    worst: float
    best: float
    n_episodes: int


class EvaluationTable(BaseModel):
    model: str
    reward_mode: RewardMode
    base_seed: int
    rows: List[EvaluationRow] = Field(default_factory=list)
    mean_over_variants: float
    worst_mean: float
    standard_score: float
    retention: float

    def variant_rows(self) -> List[EvaluationRow]:
        return [row for row in self.rows if row.variant != STANDARD_MORPHOLOGY.label]

    def to_payload(self) -> Dict[str, Any]:
        return {"format_version": FORMAT_VERSION, **self.model_dump(mode="json")}


class RuleUpdateSample(BaseModel):
    rule_id: int
    count: int
    deltas: List[float]


class RuleSummary(BaseModel):
    rule_id: int
    count: int
    n_updates: int
    mean_dw: float
    min_dw: float
    max_dw: float
    category: str


def _variant_scores(model: TrainedModel, variant: MorphologyVariant, seeds: Sequence[int],
                    reward_mode: RewardMode) -> List[float]:
    return episode_scores(
        model.config, model.env, model.genome, model.template(), seeds,
        variant=variant, reward_mode=reward_mode, noise_sigma=0.0,
    )


def _row(label: str, scores: Sequence[float]) -> EvaluationRow:
    scores = np.asarray(scores, dtype=np.float64)
    return EvaluationRow(
        variant=label,
        mean=float(np.mean(scores)),
        std=float(np.std(scores)),
        worst=float(np.min(scores)),
        best=float(np.max(scores)),
        n_episodes=int(scores.size),
    )


def evaluate(
    model: TrainedModel,
    variants: Sequence[MorphologyVariant],
    n_episodes: int = 100,
    reward_mode: RewardMode = RewardMode.DISTANCE_ONLY,
    base_seed: int = 1000,
    jobs: int = 1,
) -> EvaluationTable:
    """Score a model on the standard morphology and every variant without observation noise.

    The first row is always the standard morphology; every row uses the same episode seeds.
    """
    if n_episodes < 1:
        raise ArgumentError(f"n_episodes must be at least 1, got {n_episodes}")
    seeds = evaluation_episode_seeds(base_seed, n_episodes)
    targets = [STANDARD_MORPHOLOGY] + [variant for variant in variants if not variant.is_standard]
    if jobs == 1:
        results = [_variant_scores(model, variant, seeds, reward_mode) for variant in targets]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(_variant_scores)(model, variant, seeds, reward_mode) for variant in targets
        )

    rows = [_row(variant.label, scores) for variant, scores in zip(targets, results)]
    for row in rows:
        logger.info(f"[{model.name}] {row.variant}: mean {row.mean:.4f} std {row.std:.4f} worst {row.worst:.4f}")

    standard = rows[0]
    others = rows[1:] or rows
    mean_over_variants = float(np.mean([row.mean for row in others]))
    worst_mean = float(np.mean([row.worst for row in others]))
    retention = mean_over_variants / standard.mean if standard.mean != 0 else math.nan
    return EvaluationTable(
        model=model.name,
        reward_mode=reward_mode,
        base_seed=base_seed,
        rows=rows,
        mean_over_variants=mean_over_variants,
        worst_mean=worst_mean,
        standard_score=standard.mean,
        retention=retention,
    )


def top_rules(counts: np.ndarray, top_k: int) -> np.ndarray:
    """Rule ids by descending synapse count, ties by ascending id."""
    ids = np.arange(counts.size)
    return np.lexsort((ids, -counts))[:top_k]


def export_rule_updates(
    model: TrainedModel,
    variant: MorphologyVariant = STANDARD_MORPHOLOGY,
    seed: int = 0,
    top_k: int = 10,
) -> List[RuleUpdateSample]:
    """Run one episode and collect every weight change made by the top_k most-followed rules.

    Deltas are the rule outputs before clamping, step-major then synapse order.
    """
    if not model.config.kind.plastic:
        raise ModelKindError(f"model '{model.name}' is static; rule updates exist only for plastic models")
    if top_k < 1:
        raise ArgumentError(f"top_k must be at least 1, got {top_k}")
    rule_set = model.rule_set()
    counts = rule_set.assignment_counts()
    chosen = top_rules(counts, top_k)
    synapses = {int(rule): np.flatnonzero(rule_set.assignment == rule) for rule in chosen}
    collected: Dict[int, List[np.ndarray]] = {rule: [] for rule in synapses}

    def collect(deltas: List[np.ndarray]) -> None:
        flat = np.concatenate([delta.ravel() for delta in deltas])
        for rule, indices in synapses.items():
            collected[rule].append(flat[indices])

    env = make_env(model.env)
    run_episode(model.controller(), env, variant, seed, update_hook=collect)
    env.close()
    return [
        RuleUpdateSample(
            rule_id=rule,
            count=int(counts[rule]),
            deltas=np.concatenate(collected[rule]).tolist() if collected[rule] else [],
        )
        for rule in synapses
    ]


def classify_rule_updates(deltas: Sequence[float], zero_tol: float = ZERO_TOL) -> str:
    """Type of an update distribution: near_zero, one_sided, gapped or two_sided."""
    deltas = np.asarray(deltas, dtype=np.float64)
    magnitude = np.abs(deltas)
    if deltas.size == 0 or magnitude.max() < zero_tol:
        return "near_zero"
    nonzero = deltas[deltas != 0]
    positive = int(np.sum(nonzero > 0))
    if max(positive, nonzero.size - positive) >= ONE_SIDED_SHARE * nonzero.size:
        return "one_sided"
    small_share = float(np.mean(magnitude < GAP_FRACTION * magnitude.max()))
    return "gapped" if small_share < GAP_SHARE else "two_sided"


def summarize_rule_updates(samples: Sequence[RuleUpdateSample], zero_tol: float = ZERO_TOL) -> List[RuleSummary]:
    summaries = []
    for sample in samples:
        deltas = np.asarray(sample.deltas, dtype=np.float64)
        empty = deltas.size == 0
        summaries.append(RuleSummary(
            rule_id=sample.rule_id,
            count=sample.count,
            n_updates=int(deltas.size),
            mean_dw=0.0 if empty else float(np.mean(deltas)),
            min_dw=0.0 if empty else float(np.min(deltas)),
            max_dw=0.0 if empty else float(np.max(deltas)),
            category=classify_rule_updates(deltas, zero_tol),
        ))
    return summaries


def trend_violations(levels: Sequence[float], means: Sequence[float],
                     tolerance: float = TREND_TOLERANCE) -> List[float]:
    """Levels (ordered by increasing perturbation) whose score rises above the previous one by more than the band."""
    if len(levels) != len(means):
        raise ArgumentError(f"{len(levels)} levels but {len(means)} scores")
    violations = []
    for index in range(1, len(means)):
        previous = means[index - 1]
        if means[index] > previous + tolerance * abs(previous):
            violations.append(levels[index])
    return violations


def trend_report(table: EvaluationTable, tolerance: float = TREND_TOLERANCE) -> Dict[str, List[float]]:
    """Trend violations per limb combination of a grid evaluation."""
    by_combo: Dict[str, List[tuple]] = {}
    for row in table.variant_rows():
        combo, _, level = row.variant.rpartition("@")
        if not combo:
            continue
        by_combo.setdefault(combo, []).append((float(level), row.mean))
    report = {}
    for combo, points in by_combo.items():
        # decreasing scale factor means increasing perturbation
        points.sort(key=lambda point: -point[0])
        report[combo] = trend_violations([p[0] for p in points], [p[1] for p in points], tolerance)
    return report


def retention_comparison(plastic: Sequence[float], static: Sequence[float]) -> Dict[str, Optional[Any]]:
    """Per-replicate retention of a plastic and a static model and how often the plastic one wins."""
    wins = sum(1 for p, s in zip(plastic, static) if not (math.isnan(p) or math.isnan(s)) and p > s)
    return {
        "plastic": list(plastic),
        "static": list(static),
        "plastic_wins": wins,
        "replicates": min(len(plastic), len(static)),
    }

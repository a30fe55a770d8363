#!/usr/bin/env python3
"""
Experiment Management System
Run directories, training/evaluation/export of single runs and the model x replicate
experiment matrix with its summary report.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .config import ExperimentConfig
from .environments import STANDARD_MORPHOLOGY, MorphologyVariant, RewardMode, variant_grid_by_name
from .evaluation import (
    EvaluationTable,
    RuleUpdateSample,
    evaluate,
    export_rule_updates,
    retention_comparison,
    summarize_rule_updates,
    trend_report,
)
from .models import ModelConfig, TrainedModel, parameter_count
from .persistence import (
    load_checkpoint,
    save_config_yaml,
    save_record,
    write_eval_csv,
    write_metrics_csv,
    write_rule_summary_csv,
    write_rule_updates_csv,
    write_summary_csv,
)
from .records import FORMAT_VERSION, RunRecord
from .settings import get_settings
from .training import branch_runs, train

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ExperimentManager:
    def __init__(self, runs_dir: Optional[PathLike] = None):
        self.runs_dir = Path(runs_dir) if runs_dir is not None else Path(get_settings().runs_dir)
        self.ensure_directories()

    def ensure_directories(self):
        """Ensure the runs directory exists."""
        self.runs_dir.mkdir(parents=True, exist_ok=True)

    def run_dir(self, model: str, replicate: int) -> Path:
        path = self.runs_dir / model / str(replicate)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_run(self, record: RunRecord, config: ExperimentConfig) -> Path:
        """Write record.json, metrics.csv and the effective config.yaml of a finished run."""
        run_dir = self.run_dir(record.model, record.replicate_seed)
        try:
            save_record(run_dir / "record.json", record)
            write_metrics_csv(run_dir / "metrics.csv", record.metrics)
            save_config_yaml(run_dir / "config.yaml", config.model_copy(update={"model": record.config}))
        except OSError as e:
            logger.error(f"Error writing run directory {run_dir}: {e}")
            raise
        logger.info(f"Run '{record.model}' seed {record.replicate_seed} written to {run_dir}")
        return run_dir

    def train(
        self,
        config: ExperimentConfig,
        seed: int,
        jobs: int = 1,
        resume_path: Optional[PathLike] = None,
        progress: bool = False,
    ) -> RunRecord:
        run_dir = self.run_dir(config.model.name, seed)
        resume = load_checkpoint(resume_path) if resume_path is not None else None
        record = train(
            config.model,
            config.env,
            seed,
            jobs=jobs,
            checkpoint_every=config.checkpoint_every,
            checkpoint_dir=run_dir if config.checkpoint_every else None,
            resume=resume,
            progress=progress,
        )
        self.write_run(record, config)
        return record

    def evolve_merge(self, config: ExperimentConfig, seed: int, jobs: int = 1,
                     progress: bool = False) -> List[RunRecord]:
        """Train an evolve-and-merge trunk with its branches and write one run directory per record."""
        records = branch_runs(
            config.model,
            config.env,
            seed,
            jobs=jobs,
            progress=progress,
            checkpoint_every=config.checkpoint_every,
            run_dir_for=lambda name: self.run_dir(name, seed),
        )
        for record in records:
            self.write_run(record, config)
        return records

    def evaluate_run(
        self,
        model: TrainedModel,
        out_dir: PathLike,
        variants: Sequence[MorphologyVariant],
        n_episodes: int,
        reward_mode: RewardMode,
        base_seed: int,
        jobs: int = 1,
    ) -> EvaluationTable:
        """Evaluate a trained model and write eval.csv and eval.json into out_dir."""
        table = evaluate(model, variants, n_episodes=n_episodes, reward_mode=reward_mode,
                         base_seed=base_seed, jobs=jobs)
        self.write_evaluation(out_dir, table)
        return table

    def write_evaluation(self, run_dir: PathLike, table: EvaluationTable) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_eval_csv(run_dir / "eval.csv", table)
        with open(run_dir / "eval.json", "w", encoding="utf-8") as f:
            json.dump(table.to_payload(), f, indent=2, ensure_ascii=False)

    def export_rules(
        self,
        model: TrainedModel,
        out_dir: PathLike,
        variant: MorphologyVariant = STANDARD_MORPHOLOGY,
        seed: int = 0,
        top_k: int = 10,
    ) -> List[RuleUpdateSample]:
        """Export the per-step updates of the most-followed rules and their distribution types."""
        out_dir = Path(out_dir)
        samples = export_rule_updates(model, variant, seed=seed, top_k=top_k)
        write_rule_updates_csv(out_dir / "rule_updates.csv", samples)
        summaries = summarize_rule_updates(samples)
        write_rule_summary_csv(out_dir / "rule_summary.csv", summaries)
        for summary in summaries:
            logger.info(f"[{model.name}] rule {summary.rule_id} ({summary.count} synapses): {summary.category}")
        return samples

    def run_matrix(
        self,
        models: Dict[str, ModelConfig],
        config: ExperimentConfig,
        seeds: Optional[Sequence[int]] = None,
        jobs: int = 1,
        plastic_model: Optional[str] = None,
        static_model: Optional[str] = None,
        progress: bool = False,
    ) -> List[Dict[str, Any]]:
        """Train every model for every seed, score it, and write summary.csv and robustness.json.

        Orig score is the FULL-reward mean on the standard morphology; novel score is the mean over the
        variant grid in the evaluation reward mode.
        """
        seeds = list(seeds if seeds is not None else config.seeds)
        evaluation = config.evaluation
        variants = variant_grid_by_name(evaluation.grid)
        rows = []
        retentions: Dict[str, List[float]] = {}
        trends: Dict[str, List[Dict[str, List[float]]]] = {}

        for name, model_config in models.items():
            run_config = config.model_copy(update={"model": model_config})
            orig, novel, worst, retention = [], [], [], []
            for seed in seeds:
                record = self.train(run_config, seed, jobs=jobs, progress=progress)
                trained = record.trained_model()
                orig.append(evaluate(trained, [], n_episodes=evaluation.episodes, reward_mode=RewardMode.FULL,
                                     base_seed=evaluation.base_seed, jobs=jobs).standard_score)
                table = evaluate(trained, variants, n_episodes=evaluation.episodes,
                                 reward_mode=evaluation.reward_mode, base_seed=evaluation.base_seed, jobs=jobs)
                self.write_evaluation(self.run_dir(name, seed), table)
                novel.append(table.mean_over_variants)
                worst.append(table.worst_mean)
                retention.append(table.retention)
                trends.setdefault(name, []).append(trend_report(table))
            retentions[name] = retention
            rows.append({
                "model": name,
                "parameters": parameter_count(model_config),
                "replicates": len(seeds),
                "orig_mean": float(np.mean(orig)),
                "orig_std": float(np.std(orig)),
                "novel_mean": float(np.mean(novel)),
                "novel_std": float(np.std(novel)),
                "worst_mean": float(np.mean(worst)),
                "retention": math.nan if all(math.isnan(r) for r in retention) else float(np.nanmean(retention)),
            })
            logger.info(f"Model '{name}': orig {rows[-1]['orig_mean']:.4f} novel {rows[-1]['novel_mean']:.4f}")

        write_summary_csv(self.runs_dir / "summary.csv", rows)
        self.write_robustness(models, retentions, trends, plastic_model, static_model)
        return rows

    def write_robustness(
        self,
        models: Dict[str, ModelConfig],
        retentions: Dict[str, List[float]],
        trends: Dict[str, Any],
        plastic_model: Optional[str] = None,
        static_model: Optional[str] = None,
    ) -> Dict[str, Any]:
        plastic_model = plastic_model or next((n for n, m in models.items() if m.kind.plastic), None)
        static_model = static_model or next((n for n, m in models.items() if not m.kind.plastic), None)
        payload: Dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "retention": retentions,
            "trend_violations": trends,
            "comparison": None,
        }
        if plastic_model in retentions and static_model in retentions:
            payload["comparison"] = {
                "plastic_model": plastic_model,
                "static_model": static_model,
                **retention_comparison(retentions[plastic_model], retentions[static_model]),
            }
        with open(self.runs_dir / "robustness.json", "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False)
        return payload

#!/usr/bin/env python3
"""
Training Harness
ES training loops for every model kind, scheduled rule merging, checkpoint/resume
and branching of evolve-and-merge runs at merge points.
"""

import copy
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from .environments import EnvConfig
from .es import OpenES, EsState
from .exceptions import ConfigurationError, ModelKindError
from .models import ModelConfig, ModelKind, initial_genome, rule_template
from .persistence import save_checkpoint
from .records import Checkpoint, GenerationMetrics, MergeEvent, RunRecord
from .rollout import evaluate_population, generation_episode_seeds
from .rules import RuleSet, genome_to_rules, merge_rules, rules_to_genome

# Configure logging
logger = logging.getLogger(__name__)

LOG_EVERY = 10
MERGE_STREAM = 1

MergeHook = Callable[["TrainingRun", int, str], None]
RunDirFor = Callable[[str], Path]


def replicate_seeds(replicate_seed: int) -> List[int]:
    """(initialization seed, ES noise seed) of a replicate."""
    return [int(s) for s in np.random.SeedSequence(int(replicate_seed)).generate_state(2)]


class TrainingRun:
    """Mutable state of one run between generations."""

    def __init__(
        self,
        config: ModelConfig,
        env_config: EnvConfig,
        replicate_seed: int,
        es: OpenES,
        template: Optional[RuleSet],
        lineage: str = "trunk",
        metrics: Optional[List[GenerationMetrics]] = None,
        merge_events: Optional[List[MergeEvent]] = None,
    ):
        self.config = config
        self.env_config = env_config
        self.replicate_seed = replicate_seed
        self.es = es
        self.template = template
        self.lineage = lineage
        self.metrics = metrics or []
        self.merge_events = merge_events or []

    @classmethod
    def start(cls, config: ModelConfig, env_config: EnvConfig, replicate_seed: int) -> "TrainingRun":
        init_seed, es_seed = replicate_seeds(replicate_seed)
        mu0, rule_set = initial_genome(config, init_seed)
        template = None
        if rule_set is not None:
            template = rule_template(rule_set.variant, rule_set.assignment, rule_set.n_rules)
        es = OpenES(config.es, mu0=mu0, rng_seed=es_seed)
        return cls(config, env_config, replicate_seed, es, template)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "TrainingRun":
        es = OpenES(checkpoint.config.es, state=EsState.from_dict(checkpoint.es_state))
        template = None
        if checkpoint.assignment is not None:
            variant = checkpoint.config.network.rule_variant
            n_rules = es.num_params // variant.params_per_rule
            template = rule_template(variant, np.asarray(checkpoint.assignment, dtype=np.int64), n_rules)
        return cls(
            checkpoint.config,
            checkpoint.env,
            checkpoint.replicate_seed,
            es,
            template,
            lineage=checkpoint.lineage,
            metrics=list(checkpoint.metrics),
            merge_events=list(checkpoint.merge_events),
        )

    @property
    def generation(self) -> int:
        return self.es.state.generation

    @property
    def rule_count(self) -> Optional[int]:
        return None if self.template is None else self.template.n_rules

    def fork(self, config: ModelConfig, lineage: str) -> "TrainingRun":
        es = OpenES(config.es, state=copy.deepcopy(self.es.state))
        return TrainingRun(
            config,
            self.env_config,
            self.replicate_seed,
            es,
            None if self.template is None else self.template.copy(),
            lineage=lineage,
            metrics=list(self.metrics),
            merge_events=list(self.merge_events),
        )

    def merge(self, target: int) -> MergeEvent:
        """Halve (or otherwise reduce) the rule count of the current mean by K-Means."""
        generation = self.generation
        current = genome_to_rules(self.es.mu, self.template)
        seed = int(np.random.SeedSequence([self.replicate_seed, generation, MERGE_STREAM]).generate_state(1)[0])
        merged = merge_rules(current, target, seed=seed, n_init=self.config.schedule.kmeans_n_init)
        self.es.reset_mean(rules_to_genome(merged))
        self.template = rule_template(merged.variant, merged.assignment, merged.n_rules)
        event = MergeEvent(
            generation=generation,
            rules_before=current.n_rules,
            rules_after=merged.n_rules,
            params_before=current.trainable_parameter_count,
            params_after=merged.trainable_parameter_count,
        )
        self.merge_events.append(event)
        logger.info(
            f"[{self.config.name}] generation {generation}: merged {event.rules_before} -> {event.rules_after} rules "
            f"({event.params_before} -> {event.params_after} parameters)"
        )
        return event

    def step(self, jobs: int = 1) -> GenerationMetrics:
        """Evaluate one population and update the search distribution."""
        generation = self.generation
        population = self.es.ask()
        seeds = generation_episode_seeds(self.replicate_seed, generation, self.config.episodes_per_candidate)
        fitnesses = evaluate_population(self.config, self.env_config, population, self.template, seeds, jobs=jobs)
        metrics = GenerationMetrics(
            generation=generation,
            pop_mean=float(np.mean(fitnesses)),
            pop_max=float(np.max(fitnesses)),
            sigma=self.es.state.sigma,
            lr=self.es.state.lr,
            rule_count=self.rule_count,
        )
        self.metrics.append(metrics)
        self.es.tell(fitnesses)
        return metrics

    def checkpoint(self) -> Checkpoint:
        rules = None
        if self.template is not None:
            rules = genome_to_rules(self.es.mu, self.template).rules.tolist()
        return Checkpoint(
            model=self.config.name,
            lineage=self.lineage,
            replicate_seed=self.replicate_seed,
            config=self.config,
            env=self.env_config,
            generation=self.generation,
            es_state=self.es.state.to_dict(),
            rules=rules,
            assignment=None if self.template is None else self.template.assignment.tolist(),
            metrics=self.metrics,
            merge_events=self.merge_events,
        )

    def record(self) -> RunRecord:
        return RunRecord(
            model=self.config.name,
            lineage=self.lineage,
            replicate_seed=self.replicate_seed,
            config=self.config,
            env=self.env_config,
            generations_run=self.generation,
            metrics=self.metrics,
            merge_events=self.merge_events,
            final_genome=self.es.mu.tolist(),
            assignment=None if self.template is None else self.template.assignment.tolist(),
            rule_count=self.rule_count,
            parameter_count=self.es.num_params,
        )

    def advance(
        self,
        merge_points: Dict[int, int],
        jobs: int = 1,
        checkpoint_every: Optional[int] = None,
        checkpoint_dir: Optional[Path] = None,
        on_merge: Optional[MergeHook] = None,
        progress: bool = False,
    ) -> None:
        """Run generations until the budget, merging at the top of each scheduled generation."""
        budget = self.config.generations_budget
        merged_at = {event.generation for event in self.merge_events}
        with tqdm(total=budget, initial=self.generation, desc=self.config.name, disable=not progress) as bar:
            while self.generation < budget:
                generation = self.generation
                if generation in merge_points and generation not in merged_at:
                    if on_merge:
                        on_merge(self, generation, "before")
                    self.merge(merge_points[generation])
                    merged_at.add(generation)
                    if on_merge:
                        on_merge(self, generation, "after")

                metrics = self.step(jobs)

                if checkpoint_every and checkpoint_dir is not None and self.generation % checkpoint_every == 0:
                    checkpoint = self.checkpoint()
                    checkpoint_dir = Path(checkpoint_dir)
                    save_checkpoint(checkpoint_dir / "checkpoints" / f"gen_{self.generation:05d}.json", checkpoint)
                    save_checkpoint(checkpoint_dir / "checkpoint.json", checkpoint)
                if generation % LOG_EVERY == 0 or self.generation == budget:
                    logger.info(
                        f"[{self.config.name}/{self.lineage}] generation {generation}: "
                        f"mean {metrics.pop_mean:.4f} max {metrics.pop_max:.4f} "
                        f"sigma {metrics.sigma:.5f} lr {metrics.lr:.5f}"
                    )
                bar.update(1)


def train(
    config: ModelConfig,
    env_config: EnvConfig,
    replicate_seed: int,
    jobs: int = 1,
    checkpoint_every: Optional[int] = None,
    checkpoint_dir: Optional[Path] = None,
    resume: Optional[Checkpoint] = None,
    progress: bool = False,
) -> RunRecord:
    """Train one model for its generation budget.

    Args:
        checkpoint_dir: run directory receiving checkpoint.json and checkpoints/gen_XXXXX.json
        resume: continue from this checkpoint; the result is identical to an uninterrupted run
    """
    if resume is not None:
        if resume.config != config or resume.env != env_config or resume.replicate_seed != replicate_seed:
            raise ConfigurationError(
                f"checkpoint for '{resume.model}' (seed {resume.replicate_seed}) does not match this run"
            )
        run = TrainingRun.from_checkpoint(resume)
        logger.info(f"Resuming '{config.name}' seed {replicate_seed} at generation {run.generation}")
    else:
        run = TrainingRun.start(config, env_config, replicate_seed)
        logger.info(
            f"Training '{config.name}' ({config.kind.value}) seed {replicate_seed}: "
            f"{run.es.num_params} parameters, {config.generations_budget} generations"
        )
    run.advance(
        dict(config.merge_points()),
        jobs=jobs,
        checkpoint_every=checkpoint_every,
        checkpoint_dir=checkpoint_dir,
        progress=progress,
    )
    return run.record()


def branch_runs(
    config: ModelConfig,
    env_config: EnvConfig,
    replicate_seed: int,
    jobs: int = 1,
    progress: bool = False,
    checkpoint_every: Optional[int] = None,
    run_dir_for: Optional[RunDirFor] = None,
) -> List[RunRecord]:
    """Train an evolve-and-merge trunk and the runs forked from it at its merge points.

    Before the first merge an unmerged ALPHA_ABCD branch is forked; after every merge but the last
    a branch keeping that rule count is forked. Every branch continues to the same budget.

    Args:
        checkpoint_every: checkpoint cadence shared by the trunk and every branch
        run_dir_for: maps a run name to the directory receiving its checkpoints

    Returns:
        the trunk record first, then the branches in fork order
    """
    if config.kind is not ModelKind.EVOLVE_MERGE:
        raise ModelKindError(f"branch_runs needs an EVOLVE_MERGE model, got {config.kind.value}")
    points = config.merge_points()
    order = {generation: index for index, (generation, _) in enumerate(points)}
    forks: List[TrainingRun] = []

    def on_merge(run: TrainingRun, generation: int, phase: str) -> None:
        index = order[generation]
        if phase == "before" and index == 0:
            branch = config.model_copy(update={"kind": ModelKind.ALPHA_ABCD, "name": "alpha_abcd"})
            forks.append(run.fork(branch, lineage=f"fork@{generation}"))
        elif phase == "after" and index < len(points) - 1:
            count = run.rule_count
            schedule = config.schedule.model_copy(update={"floor": count})
            branch = config.model_copy(update={"name": f"rules_{count}", "schedule": schedule})
            forks.append(run.fork(branch, lineage=f"fork@{generation}"))
        else:
            return
        logger.info(f"Forked branch '{forks[-1].config.name}' at generation {generation}")

    def checkpoint_dir(run: TrainingRun) -> Optional[Path]:
        if not checkpoint_every or run_dir_for is None:
            return None
        return run_dir_for(run.config.name)

    trunk = TrainingRun.start(config, env_config, replicate_seed)
    trunk.advance(dict(points), jobs=jobs, checkpoint_every=checkpoint_every, checkpoint_dir=checkpoint_dir(trunk),
                  on_merge=on_merge, progress=progress)
    records = [trunk.record()]
    for branch in forks:
        branch.advance({}, jobs=jobs, checkpoint_every=checkpoint_every, checkpoint_dir=checkpoint_dir(branch),
                       progress=progress)
        records.append(branch.record())
    return records

#!/usr/bin/env python3
"""
Command Line Interface
Train, merge, evaluate and inspect models; run the experiment matrix and a quick smoke test.

Exit codes: 0 success, 1 user error, 2 internal error.
"""

import logging
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

import click

from .config import ExperimentConfig
from .environments import STANDARD_MORPHOLOGY, RewardMode, variant_grid_by_name
from .exceptions import ConfigurationError, EvolveMergeError
from .experiment_manager import ExperimentManager
from .models import baseline_models, parameter_count
from .persistence import build_config, load_config, load_trained_model, validate_run_directory
from .settings import get_settings

# Configure logging
logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

SMOKE_CONFIG = {
    "model": {
        "name": "smoke",
        "kind": "EVOLVE_MERGE",
        "network": {"layer_sizes": [28, 4, 8]},
        "schedule": {"first_merge_gen": 2, "merge_interval": 1, "floor": 36, "kmeans_n_init": 2},
        "generations_budget": 5,
        "es": {"population_size": 4},
    },
    "env": {"name": "segwalker", "episode_steps": 20},
    "evaluation": {"grid": "paper30", "episodes": 1},
    "seeds": [0],
    "checkpoint_every": 2,
}


class Context:
    def __init__(self, jobs: int, runs_dir: Path, progress: bool):
        self.jobs = jobs
        self.runs_dir = runs_dir
        self.progress = progress

    def manager(self, runs_dir: Optional[Path] = None) -> ExperimentManager:
        return ExperimentManager(runs_dir or self.runs_dir)


def _seeds(config: ExperimentConfig, seeds: Sequence[int]) -> List[int]:
    return list(seeds) if seeds else list(config.seeds)


def _with_checkpointing(config: ExperimentConfig, every: Optional[int]) -> ExperimentConfig:
    every = every or config.checkpoint_every or get_settings().checkpoint_every
    return config.model_copy(update={"checkpoint_every": every})


config_option = click.option("--config", "config_path", required=True,
                             type=click.Path(dir_okay=False, path_type=Path), help="Experiment YAML file")
out_option = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
                          help="Runs directory for this command (default: --runs-dir)")
set_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                          help="Override a config value, e.g. --set model.es.population_size=100")
seed_option = click.option("--seed", "seeds", type=int, multiple=True,
                           help="Replicate seed (repeatable; default: the config's seeds)")
run_seed_option = click.option("--seed", "seeds", type=int, multiple=True, required=True,
                               help="Replicate seed (repeatable, at least one)")


@click.group()
@click.option("--log-level", default=None, help="Logging level (default from EVOLVE_MERGE_LOG_LEVEL or INFO)")
@click.option("--jobs", type=click.IntRange(min=1), default=None,
              help="Parallel evaluation workers (default from EVOLVE_MERGE_JOBS or 1)")
@click.option("--runs-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Root directory for run outputs")
@click.option("--progress/--no-progress", default=None, help="Show progress bars")
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str], jobs: Optional[int], runs_dir: Optional[Path],
        progress: Optional[bool]):
    """Evolve-and-merge Hebbian rules and compare the robustness of the resulting models."""
    settings = get_settings()
    level = (log_level or settings.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        raise click.BadParameter(f"unknown log level '{level}'", param_hint="--log-level")
    logging.basicConfig(level=level, format=LOG_FORMAT)
    ctx.obj = Context(
        jobs=jobs or settings.jobs,
        runs_dir=runs_dir or settings.runs_dir,
        progress=settings.progress if progress is None else progress,
    )


@cli.command("train")
@config_option
@out_option
@set_option
@run_seed_option
@click.option("--resume", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Continue from this checkpoint file (single seed)")
@click.option("--checkpoint-every", type=click.IntRange(min=1), default=None)
@click.pass_obj
def train_command(obj: Context, config_path: Path, out: Optional[Path], overrides, seeds, resume: Optional[Path],
                  checkpoint_every: Optional[int]):
    """Train the configured model for every replicate seed."""
    config = _with_checkpointing(load_config(config_path, overrides), checkpoint_every)
    if resume is not None and len(seeds) != 1:
        raise ConfigurationError("--resume needs exactly one --seed")
    manager = obj.manager(out)
    for seed in seeds:
        record = manager.train(config, seed, jobs=obj.jobs, resume_path=resume, progress=obj.progress)
        click.echo(f"{record.model}\tseed={seed}\tparameters={record.parameter_count}\t"
                   f"{manager.run_dir(record.model, seed)}")


@cli.command("evolve-merge")
@config_option
@out_option
@set_option
@run_seed_option
@click.option("--branches/--no-branches", default=True,
              help="Also train the runs forked at merge points")
@click.option("--checkpoint-every", type=click.IntRange(min=1), default=None)
@click.pass_obj
def evolve_merge_command(obj: Context, config_path: Path, out: Optional[Path], overrides, seeds, branches: bool,
                         checkpoint_every: Optional[int]):
    """Train an EVOLVE_MERGE model, optionally with its branches."""
    config = _with_checkpointing(load_config(config_path, overrides), checkpoint_every)
    manager = obj.manager(out)
    for seed in seeds:
        if branches:
            records = manager.evolve_merge(config, seed, jobs=obj.jobs, progress=obj.progress)
        else:
            records = [manager.train(config, seed, jobs=obj.jobs, progress=obj.progress)]
        for record in records:
            click.echo(f"{record.model}\t{record.lineage}\tseed={seed}\trules={record.rule_count}\t"
                       f"parameters={record.parameter_count}")


@cli.command("evaluate")
@click.option("--checkpoint", "source", required=True, type=click.Path(path_type=Path),
              help="Run directory, record.json or checkpoint file")
@click.option("--grid", default="paper30", show_default=True)
@click.option("--episodes", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--reward-mode", type=click.Choice([mode.value for mode in RewardMode]),
              default=RewardMode.DISTANCE_ONLY.value, show_default=True)
@click.option("--base-seed", type=int, default=1000, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Directory for eval.csv/eval.json (default: next to the model)")
@click.pass_obj
def evaluate_command(obj: Context, source: Path, grid: str, episodes: int, reward_mode: str,
                     base_seed: int, out: Optional[Path]):
    """Evaluate a trained model on the standard morphology and a variant grid."""
    model = load_trained_model(source)
    out = out or (source if source.is_dir() else source.parent)
    table = obj.manager().evaluate_run(
        model, out, variant_grid_by_name(grid), episodes, RewardMode(reward_mode), base_seed, jobs=obj.jobs,
    )
    click.echo(f"{table.model}\tstandard={table.standard_score:.6g}\tmean_over_variants="
               f"{table.mean_over_variants:.6g}\tworst_mean={table.worst_mean:.6g}\tretention={table.retention:.6g}")


@cli.command("export-rules")
@click.option("--checkpoint", "source", required=True, type=click.Path(path_type=Path),
              help="Run directory, record.json or checkpoint file")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--top-k", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--variant", "variant_label", default="standard", show_default=True,
              help="Variant label from the paper30 grid, or 'standard'")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.pass_obj
def export_rules_command(obj: Context, source: Path, seed: int, top_k: int, variant_label: str,
                         out: Optional[Path]):
    """Export per-step weight changes of the most-followed rules."""
    variants = {variant.label: variant for variant in variant_grid_by_name("paper30")}
    variants[STANDARD_MORPHOLOGY.label] = STANDARD_MORPHOLOGY
    if variant_label not in variants:
        raise ConfigurationError(f"unknown variant '{variant_label}'")
    model = load_trained_model(source)
    out = out or (source if source.is_dir() else source.parent)
    samples = obj.manager().export_rules(model, out, variants[variant_label], seed=seed, top_k=top_k)
    for sample in samples:
        click.echo(f"rule {sample.rule_id}\tcount={sample.count}\tupdates={len(sample.deltas)}")


@cli.command("param-count")
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Count the model of this config instead of the registry")
@set_option
def param_count_command(config_path: Optional[Path], overrides):
    """Print trainable parameter counts."""
    if config_path is not None:
        config = load_config(config_path, overrides)
        click.echo(f"{config.model.name}\t{parameter_count(config.model)}")
        return
    for name, model in baseline_models().items():
        click.echo(f"{name}\t{parameter_count(model)}")


@cli.command("experiment")
@config_option
@set_option
@seed_option
@click.option("--models", "model_names", default=None,
              help="Comma-separated registry names (default: all twelve)")
@click.option("--plastic-model", default=None, help="Plastic model of the retention comparison")
@click.option("--static-model", default=None, help="Static model of the retention comparison")
@click.pass_obj
def experiment_command(obj: Context, config_path: Path, overrides, seeds, model_names: Optional[str],
                       plastic_model: Optional[str], static_model: Optional[str]):
    """Train and evaluate registry models across replicates and write the summary report."""
    config = load_config(config_path, overrides)
    base = config.model
    registry = baseline_models(
        config.env.obs_dim,
        config.env.act_dim,
        schedule=base.schedule,
        generations_budget=base.generations_budget,
        episodes_per_candidate=base.episodes_per_candidate,
        es=base.es,
    )
    names = [name.strip() for name in model_names.split(",")] if model_names else list(registry)
    unknown = [name for name in names if name not in registry]
    if unknown:
        raise ConfigurationError(f"unknown model(s) {unknown}, choose from {list(registry)}")
    rows = obj.manager().run_matrix(
        {name: registry[name] for name in names},
        config,
        seeds=_seeds(config, seeds),
        jobs=obj.jobs,
        plastic_model=plastic_model,
        static_model=static_model,
        progress=obj.progress,
    )
    for row in rows:
        click.echo(f"{row['model']}\tparameters={row['parameters']}\torig={row['orig_mean']:.6g}\t"
                   f"novel={row['novel_mean']:.6g}\tretention={row['retention']:.6g}")


@cli.command("smoke")
@click.option("--keep", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Write the smoke run here instead of a temporary directory")
@click.pass_obj
def smoke_command(obj: Context, keep: Optional[Path]):
    """Train, evaluate and export a tiny model end to end and validate every artifact."""
    config = build_config(SMOKE_CONFIG)
    with tempfile.TemporaryDirectory() as scratch:
        manager = obj.manager(keep or Path(scratch))
        records = [manager.train(config, 0, jobs=obj.jobs)]
        records += manager.evolve_merge(config, 1, jobs=obj.jobs)
        trunk_dir = manager.run_dir(records[0].model, 0)
        model = load_trained_model(trunk_dir)
        evaluation = config.evaluation
        manager.evaluate_run(model, trunk_dir, variant_grid_by_name(evaluation.grid), evaluation.episodes,
                             evaluation.reward_mode, evaluation.base_seed, jobs=obj.jobs)
        manager.export_rules(model, trunk_dir, top_k=3)
        for record in records:
            checked = validate_run_directory(manager.run_dir(record.model, record.replicate_seed))
            click.echo(f"{record.model}/{record.replicate_seed}: {', '.join(checked)}")
    click.echo("smoke OK")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes."""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="evolve-merge", standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except EvolveMergeError as e:
        click.echo(f"Error: {e}", err=True)
        return 1
    except FileNotFoundError as e:
        click.echo(f"Error: file not found: {e.filename}", err=True)
        return 1
    except Exception as e:
        logger.exception(f"Internal error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())

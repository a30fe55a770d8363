#!/usr/bin/env python3
"""
Persistence
Config loading with overrides, versioned JSON checkpoints and records, CSV exports with
frozen headers and validation of run directories.
"""

import csv
import json
import logging
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import yaml
from pydantic import BaseModel, ValidationError

from .config import ExperimentConfig
from .exceptions import ConfigurationError, FormatError
from .models import TrainedModel
from .records import FORMAT_VERSION, Checkpoint, GenerationMetrics, RunRecord

if TYPE_CHECKING:
    from .evaluation import EvaluationTable, RuleSummary, RuleUpdateSample

# Configure logging
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

METRICS_HEADER = ["generation", "pop_mean", "pop_max", "sigma", "lr", "rule_count"]
EVAL_HEADER = ["variant", "mean", "std", "worst"]
RULE_UPDATES_HEADER = ["rule_id", "count", "dw"]
RULE_SUMMARY_HEADER = ["rule_id", "count", "n_updates", "mean_dw", "min_dw", "max_dw", "category"]
SUMMARY_HEADER = [
    "model", "parameters", "replicates", "orig_mean", "orig_std",
    "novel_mean", "novel_std", "worst_mean", "retention",
]

CSV_HEADERS = {
    "metrics.csv": METRICS_HEADER,
    "eval.csv": EVAL_HEADER,
    "rule_updates.csv": RULE_UPDATES_HEADER,
    "rule_summary.csv": RULE_SUMMARY_HEADER,
}


def format_real(value: float) -> str:
    return format(float(value), ".17g")


def _format_validation_error(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{location}: {item['msg']}")
    return "; ".join(problems)


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply 'dotted.key=value' overrides; values are parsed as YAML scalars."""
    data = dict(data)
    for override in overrides:
        if "=" not in override:
            raise ConfigurationError(f"override '{override}' is not of the form dotted.key=value")
        key, raw = override.split("=", 1)
        parts = [part for part in key.strip().split(".") if part]
        if not parts:
            raise ConfigurationError(f"override '{override}' has an empty key")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"override '{override}' has an unparsable value: {e}") from e
        node = data
        for part in parts[:-1]:
            child = node.get(part)
            child = dict(child) if isinstance(child, dict) else {}
            node[part] = child
            node = child
        node[parts[-1]] = value
    return data


def build_config(data: Dict[str, Any], overrides: Sequence[str] = ()) -> ExperimentConfig:
    data = apply_overrides(data, overrides)
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {_format_validation_error(e)}") from e


def load_config(path: PathLike, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Load and validate an experiment YAML file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Error reading config {path}: {e}")
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a mapping at the top level")
    return build_config(data, overrides)


def save_config_yaml(path: PathLike, config: ExperimentConfig) -> None:
    """Echo the effective configuration."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)


def _write_json(path: PathLike, payload: BaseModel) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload.model_dump(mode="json"), f, indent=2, ensure_ascii=False)
        os.replace(tmp, path)
    except OSError as e:
        logger.error(f"Error writing {path}: {e}")
        raise


def _read_versioned(path: PathLike, model: type, what: str):
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError as e:
        raise FormatError(f"{what} not found: {path}") from e
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        logger.error(f"Error reading {what} {path}: {e}")
        raise FormatError(f"corrupt {what} {path}: {e}") from e
    if not isinstance(payload, dict):
        raise FormatError(f"corrupt {what} {path}: expected a JSON object")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{what} {path} has format_version {version}, expected {FORMAT_VERSION}")
    try:
        return model(**payload)
    except ValidationError as e:
        raise FormatError(f"corrupt {what} {path}: {_format_validation_error(e)}") from e


def save_checkpoint(path: PathLike, checkpoint: Checkpoint) -> None:
    _write_json(path, checkpoint)
    logger.info(f"Checkpoint written: {path} (generation {checkpoint.generation})")


def load_checkpoint(path: PathLike) -> Checkpoint:
    return _read_versioned(path, Checkpoint, "checkpoint")


def save_record(path: PathLike, record: RunRecord) -> None:
    _write_json(path, record)


def load_record(path: PathLike) -> RunRecord:
    return _read_versioned(path, RunRecord, "run record")


def _write_rows(path: PathLike, header: List[str], rows: Iterable[List[Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def write_metrics_csv(path: PathLike, metrics: Sequence[GenerationMetrics]) -> None:
    _write_rows(path, METRICS_HEADER, (
        [
            m.generation,
            format_real(m.pop_mean),
            format_real(m.pop_max),
            format_real(m.sigma),
            format_real(m.lr),
            "" if m.rule_count is None else m.rule_count,
        ]
        for m in metrics
    ))


def write_eval_csv(path: PathLike, table: "EvaluationTable") -> None:
    _write_rows(path, EVAL_HEADER, (
        [row.variant, format_real(row.mean), format_real(row.std), format_real(row.worst)]
        for row in table.rows
    ))


def write_rule_updates_csv(path: PathLike, samples: Sequence["RuleUpdateSample"]) -> None:
    _write_rows(path, RULE_UPDATES_HEADER, (
        [sample.rule_id, sample.count, format_real(dw)]
        for sample in samples
        for dw in sample.deltas
    ))


def write_rule_summary_csv(path: PathLike, summaries: Sequence["RuleSummary"]) -> None:
    _write_rows(path, RULE_SUMMARY_HEADER, (
        [
            s.rule_id,
            s.count,
            s.n_updates,
            format_real(s.mean_dw),
            format_real(s.min_dw),
            format_real(s.max_dw),
            s.category,
        ]
        for s in summaries
    ))


def write_summary_csv(path: PathLike, rows: Sequence[Dict[str, Any]]) -> None:
    def cell(value: Any) -> Any:
        return format_real(value) if isinstance(value, float) else value

    _write_rows(path, SUMMARY_HEADER, ([cell(row[key]) for key in SUMMARY_HEADER] for row in rows))


def read_csv_header(path: PathLike) -> Optional[List[str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return next(csv.reader(f), None)


def validate_run_directory(run_dir: PathLike) -> List[str]:
    """Check every artifact present in a run directory against its frozen schema.

    Returns:
        names of the validated files

    Raises:
        FormatError: on the first artifact that does not match
    """
    run_dir = Path(run_dir)
    if not (run_dir / "record.json").exists():
        raise FormatError(f"run directory {run_dir} has no record.json")
    load_record(run_dir / "record.json")
    checked = ["record.json"]

    for name, header in CSV_HEADERS.items():
        path = run_dir / name
        if not path.exists():
            continue
        found = read_csv_header(path)
        if found != header:
            raise FormatError(f"{path} has header {found}, expected {header}")
        checked.append(name)

    if (run_dir / "checkpoint.json").exists():
        load_checkpoint(run_dir / "checkpoint.json")
        checked.append("checkpoint.json")
    for path in sorted((run_dir / "checkpoints").glob("gen_*.json")):
        load_checkpoint(path)
        checked.append(f"checkpoints/{path.name}")

    if (run_dir / "config.yaml").exists():
        try:
            with open(run_dir / "config.yaml", "r", encoding="utf-8") as f:
                ExperimentConfig(**(yaml.safe_load(f) or {}))
        except (yaml.YAMLError, ValidationError, TypeError) as e:
            raise FormatError(f"{run_dir / 'config.yaml'} is not a valid config: {e}") from e
        checked.append("config.yaml")

    if (run_dir / "eval.json").exists():
        try:
            with open(run_dir / "eval.json", "r", encoding="utf-8") as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"corrupt {run_dir / 'eval.json'}: {e}") from e
        if payload.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"{run_dir / 'eval.json'} has an unsupported format_version")
        checked.append("eval.json")
    return checked


def load_trained_model(path: PathLike) -> TrainedModel:
    """Load the evaluable model of a run directory, a record file or a checkpoint file."""
    path = Path(path)
    if path.is_dir():
        path = path / "record.json"
    try:
        with open(path, "r", encoding="utf-8") as f:
            is_checkpoint = "es_state" in json.load(f)
    except FileNotFoundError as e:
        raise FormatError(f"model file not found: {path}") from e
    except (OSError, json.JSONDecodeError, UnicodeDecodeError, TypeError) as e:
        raise FormatError(f"corrupt model file {path}: {e}") from e
    if not is_checkpoint:
        return load_record(path).trained_model()

    checkpoint = load_checkpoint(path)
    assignment = checkpoint.assignment
    return TrainedModel(
        config=checkpoint.config,
        env=checkpoint.env,
        genome=np.asarray(checkpoint.es_state["mu"], dtype=np.float64),
        assignment=None if assignment is None else np.asarray(assignment, dtype=np.int64),
    )

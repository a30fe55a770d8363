#!/usr/bin/env python3
"""
Rule Sets
Hebbian rule lists, the synapse-to-rule assignment map (the indirect encoding),
rule initialization and K-Means merging of similar rules.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .exceptions import ArgumentError, ClusteringError, ConfigurationError, EncodingError
from .network import RuleVariant

# Configure logging
logger = logging.getLogger(__name__)

RULE_INIT_STD = 0.1


class RuleParams(BaseModel):
    A: float
    B: float
    C: float
    D: Optional[float] = None
    alpha: Optional[float] = None


@dataclass
class RuleSet:
    variant: RuleVariant
    rules: np.ndarray
    assignment: np.ndarray

    def __post_init__(self):
        self.rules = np.array(self.rules, dtype=np.float64)
        self.assignment = np.array(self.assignment, dtype=np.int64)
        if self.rules.ndim != 2 or self.rules.shape[1] != self.variant.params_per_rule:
            raise EncodingError(
                f"rules must have shape (n, {self.variant.params_per_rule}), got {self.rules.shape}"
            )
        if self.assignment.ndim != 1:
            raise EncodingError("assignment must be a flat array")
        if self.assignment.size and (self.assignment.min() < 0 or self.assignment.max() >= self.n_rules):
            raise EncodingError(f"assignment refers to rules outside [0, {self.n_rules})")
        self.rules.setflags(write=False)
        self.assignment.setflags(write=False)

    @property
    def n_rules(self) -> int:
        return self.rules.shape[0]

    @property
    def connection_count(self) -> int:
        return self.assignment.size

    @property
    def trainable_parameter_count(self) -> int:
        return self.n_rules * self.variant.params_per_rule

    def assignment_counts(self) -> np.ndarray:
        """Number of synapses following each rule."""
        return np.bincount(self.assignment, minlength=self.n_rules)

    def orphan_rules(self) -> np.ndarray:
        return np.flatnonzero(self.assignment_counts() == 0)

    def rule_params(self, index: int) -> RuleParams:
        values = dict(zip(self.variant.param_names, self.rules[index].tolist()))
        return RuleParams(**values)

    def copy(self) -> "RuleSet":
        return RuleSet(self.variant, self.rules.copy(), self.assignment.copy())


def repair_orphans(assignment: np.ndarray, n_rules: int) -> np.ndarray:
    """Give every unused rule one synapse, taken from the lowest-index synapse whose rule is shared."""
    assignment = np.array(assignment, dtype=np.int64)
    counts = np.bincount(assignment, minlength=n_rules)
    orphans = np.flatnonzero(counts == 0)
    if orphans.size == 0:
        return assignment
    if n_rules > assignment.size:
        raise ConfigurationError(f"{n_rules} rules cannot all be used by {assignment.size} synapses")
    for orphan in orphans:
        donor = int(np.flatnonzero(counts[assignment] > 1)[0])
        counts[assignment[donor]] -= 1
        assignment[donor] = orphan
        counts[orphan] = 1
    logger.warning(f"Reassigned {orphans.size} synapses to orphaned rules")
    return assignment


def init_rules(n_rules: int, variant: RuleVariant, seed: int, connection_count: int) -> RuleSet:
    """Draw rule parameters from N(0, 0.1); identity assignment when there is one rule per synapse."""
    if n_rules < 1:
        raise ConfigurationError(f"n_rules must be at least 1, got {n_rules}")
    if n_rules > connection_count:
        raise ConfigurationError(
            f"{n_rules} rules requested for a network with only {connection_count} synapses"
        )
    rng = np.random.default_rng(seed)
    rules = rng.normal(0.0, RULE_INIT_STD, size=(n_rules, variant.params_per_rule))
    if n_rules == connection_count:
        assignment = np.arange(connection_count, dtype=np.int64)
    else:
        assignment = rng.integers(0, n_rules, size=connection_count, dtype=np.int64)
        assignment = repair_orphans(assignment, n_rules)
    return RuleSet(variant, rules, assignment)


def rules_to_genome(rule_set: RuleSet) -> np.ndarray:
    """Flatten rules rule-major (A, B, C, D, alpha per rule). The assignment is not part of the genome."""
    return rule_set.rules.ravel().copy()


def genome_to_rules(genome: np.ndarray, template: RuleSet) -> RuleSet:
    genome = np.asarray(genome, dtype=np.float64)
    expected = template.trainable_parameter_count
    if genome.shape != (expected,):
        raise EncodingError(f"rule genome has length {genome.size}, expected {expected}")
    rules = genome.reshape(template.n_rules, template.variant.params_per_rule).copy()
    return RuleSet(template.variant, rules, template.assignment)


def within_cluster_sum_of_squares(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum((points - centers[labels]) ** 2))


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
) -> Tuple[np.ndarray, np.ndarray]:
    """Lloyd's K-Means with k-means++ seeding, best of n_init seedings.

    Empty clusters are relocated to the points farthest from their centers (scikit-learn's
    behaviour). tol is scikit-learn's tolerance, relative to the mean per-feature variance.
    Clusters whose members are all identical get that member as their center, bit for bit.

    Returns:
        (centers of shape (k, d), labels of shape (n,))
    """
    points = np.array(points, dtype=np.float64)
    if points.ndim != 2:
        raise ArgumentError(f"points must be a 2-d array, got shape {points.shape}")
    if k < 1:
        raise ClusteringError(f"k must be at least 1, got {k}")
    n_distinct = np.unique(points, axis=0).shape[0]
    if k > n_distinct:
        raise ClusteringError(f"cannot form {k} clusters from {n_distinct} distinct points")

    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=n_init,
        max_iter=max_iters,
        tol=tol,
        random_state=seed,
        algorithm="lloyd",
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        labels = model.fit_predict(points).astype(np.int64)
    for warning in caught:
        logger.warning(f"K-Means: {warning.message}")

    centers = np.array(model.cluster_centers_, dtype=np.float64)
    for cluster in range(k):
        members = points[labels == cluster]
        if members.shape[0] and np.all(members == members[0]):
            centers[cluster] = members[0]
    return centers, labels


def merge_rules(rule_set: RuleSet, k: int, seed: int = 0, n_init: int = 10) -> RuleSet:
    """Replace the rules by k K-Means centers; each synapse follows the center of its old rule."""
    if k >= rule_set.n_rules:
        raise ArgumentError(f"merge target {k} must be below the current {rule_set.n_rules} rules")
    centers, labels = kmeans(rule_set.rules, k, seed=seed, n_init=n_init)
    assignment = labels[rule_set.assignment]
    assignment = repair_orphans(assignment, k)
    logger.info(f"Merged {rule_set.n_rules} rules into {k}")
    return RuleSet(rule_set.variant, centers, assignment)

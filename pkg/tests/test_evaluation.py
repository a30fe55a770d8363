import math

import numpy as np
import pytest

from evolve_merge import evaluation
from evolve_merge.environments import RewardMode, leg_reduction_grid
from evolve_merge.evaluation import (
    EvaluationRow,
    EvaluationTable,
    RuleUpdateSample,
    classify_rule_updates,
    evaluate,
    export_rule_updates,
    summarize_rule_updates,
    top_rules,
    trend_report,
    trend_violations,
)
from evolve_merge.exceptions import ArgumentError, ModelKindError
from evolve_merge.models import ModelConfig, TrainedModel, initial_genome


@pytest.fixture
def walker_model(walker_env):
    config = ModelConfig(name="walker_static", kind="PLAIN_STATIC", network={"layer_sizes": [28, 8]})
    genome = np.random.default_rng(0).normal(0.0, 0.5, size=224)
    return TrainedModel(config=config, env=walker_env, genome=genome)


@pytest.fixture
def rules_model(assoc_env):
    config = ModelConfig(name="few_rules", kind="FIXED_RULES", n_rules=4, network={"layer_sizes": [4, 3, 2]})
    genome, template = initial_genome(config, 5)
    return TrainedModel(config=config, env=assoc_env, genome=genome * 5.0, assignment=template.assignment)


def table_with(means):
    rows = [EvaluationRow(variant="standard", mean=10.0, std=0.0, worst=10.0, best=10.0, n_episodes=1)]
    rows += [
        EvaluationRow(variant=label, mean=mean, std=0.0, worst=mean, best=mean, n_episodes=1)
        for label, mean in means.items()
    ]
    return EvaluationTable(model="m", reward_mode=RewardMode.DISTANCE_ONLY, base_seed=0, rows=rows,
                           mean_over_variants=0.0, worst_mean=0.0, standard_score=10.0, retention=0.0)


def test_evaluation_table_rows_and_aggregates(walker_model):
    variants = leg_reduction_grid()[:3]
    table = evaluate(walker_model, variants, n_episodes=3, base_seed=7)
    assert [row.variant for row in table.rows] == ["standard"] + [v.label for v in variants]
    for row in table.rows:
        assert row.worst <= row.mean <= row.best
        assert row.n_episodes == 3
    means = [row.mean for row in table.rows[1:]]
    assert table.mean_over_variants == pytest.approx(np.mean(means))
    assert table.worst_mean <= table.mean_over_variants
    assert table.standard_score == table.rows[0].mean
    assert table.retention == pytest.approx(table.mean_over_variants / table.standard_score)


def test_evaluation_is_deterministic(walker_model):
    variants = leg_reduction_grid()[:2]
    first = evaluate(walker_model, variants, n_episodes=2, reward_mode=RewardMode.FULL)
    second = evaluate(walker_model, variants, n_episodes=2, reward_mode=RewardMode.FULL)
    assert first.model_dump() == second.model_dump()


def test_standard_only_evaluation(rules_model):
    table = evaluate(rules_model, [], n_episodes=2)
    assert len(table.rows) == 1
    assert table.mean_over_variants == table.standard_score


def test_retention_is_nan_for_a_zero_standard_score(walker_model, monkeypatch):
    monkeypatch.setattr(evaluation, "_variant_scores", lambda *args: [0.0, 0.0])
    table = evaluate(walker_model, leg_reduction_grid()[:2], n_episodes=2)
    assert table.standard_score == 0.0
    assert math.isnan(table.retention)


def test_evaluate_needs_episodes(walker_model):
    with pytest.raises(ArgumentError):
        evaluate(walker_model, [], n_episodes=0)


def test_top_rules_order():
    assert top_rules(np.array([2, 5, 5, 1]), 3).tolist() == [1, 2, 0]


def test_rule_updates_cover_every_follower_and_step(rules_model):
    samples = export_rule_updates(rules_model, seed=3, top_k=2)
    counts = rules_model.rule_set().assignment_counts()
    assert len(samples) == 2
    assert [s.rule_id for s in samples] == top_rules(counts, 2).tolist()
    assert samples[0].count >= samples[1].count
    for sample in samples:
        assert sample.count == counts[sample.rule_id]
        assert len(sample.deltas) == sample.count * rules_model.env.episode_steps


def test_rule_updates_are_reproducible(rules_model):
    assert export_rule_updates(rules_model, seed=1) == export_rule_updates(rules_model, seed=1)


def test_zero_and_sign_biased_rules(assoc_env):
    config = ModelConfig(name="two_rules", kind="FIXED_RULES", n_rules=2, network={"layer_sizes": [4, 3, 2]})
    # rule 0 never changes a weight, rule 1 always adds alpha * D = 0.1
    genome = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.2])
    model = TrainedModel(config=config, env=assoc_env, genome=genome, assignment=np.arange(18) % 2)
    zero, biased = export_rule_updates(model, seed=0, top_k=2)
    assert (zero.rule_id, biased.rule_id) == (0, 1)
    assert len(zero.deltas) == 9 * assoc_env.episode_steps
    assert all(delta == 0.0 for delta in zero.deltas)
    np.testing.assert_allclose(biased.deltas, 0.1, rtol=0, atol=1e-15)
    assert [s.category for s in summarize_rule_updates([zero, biased])] == ["near_zero", "one_sided"]


def test_static_models_have_no_rule_updates(walker_model):
    with pytest.raises(ModelKindError):
        export_rule_updates(walker_model)


@pytest.mark.parametrize("deltas, category", [
    ([1e-4, -2e-4, 0.0], "near_zero"),
    ([0.1, 0.2, 0.3, 0.25, -0.01, 0.2, 0.3, 0.1, 0.2, 0.4], "one_sided"),
    ([-1.0, -0.8, -0.6, 0.6, 0.8, 1.0], "gapped"),
    (np.linspace(-1.0, 1.0, 101), "two_sided"),
    ([], "near_zero"),
])
def test_update_distribution_types(deltas, category):
    assert classify_rule_updates(deltas) == category


def test_rule_summaries():
    samples = [RuleUpdateSample(rule_id=3, count=2, deltas=[0.5, -0.5, 1.0, -1.0])]
    summary = summarize_rule_updates(samples)[0]
    assert (summary.rule_id, summary.count, summary.n_updates) == (3, 2, 4)
    assert (summary.mean_dw, summary.min_dw, summary.max_dw) == (0.0, -1.0, 1.0)
    assert summary.category == "gapped"


def test_trend_violations():
    levels = [0.975, 0.95, 0.925]
    assert trend_violations(levels, [10.0, 9.0, 9.4]) == []
    assert trend_violations(levels, [10.0, 9.0, 9.6]) == [0.925]
    assert trend_violations(levels, [-2.0, -1.8, -1.95]) == [0.95]
    with pytest.raises(ArgumentError):
        trend_violations(levels, [1.0])


def test_trend_report_groups_by_limb_combination():
    table = table_with({
        "frontleft@0.975": 9.0,
        "frontleft@0.95": 9.8,
        "frontleft+backright@0.975": 8.0,
        "frontleft+backright@0.95": 7.0,
    })
    assert trend_report(table) == {"frontleft": [0.95], "frontleft+backright": []}

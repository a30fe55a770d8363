import numpy as np
import pytest

from evolve_merge.exceptions import EncodingError, InputShapeError, NetworkStateError
from evolve_merge.network import FeedForwardNetwork, NetworkSpec, RuleVariant
from evolve_merge.rules import RuleSet, init_rules


def plastic_network(layer_sizes, variant=RuleVariant.ABCD_ALPHA, seed=0):
    network = FeedForwardNetwork(NetworkSpec(layer_sizes=layer_sizes, plastic=True, rule_variant=variant))
    network.init_weights(seed)
    return network


def scalar_update(weights, activations, rule_set, clip):
    """Per-synapse reference implementation of one ABCD update."""
    updated = [w.copy() for w in weights]
    synapse = 0
    for layer, w in enumerate(updated):
        post, pre = w.shape
        for j in range(post):
            for i in range(pre):
                params = rule_set.rules[rule_set.assignment[synapse]]
                o_i = activations[layer][i]
                o_j = activations[layer + 1][j]
                hebb = params[0] * o_i * o_j + params[1] * o_i + params[2] * o_j
                if rule_set.variant is RuleVariant.ABCD_ALPHA:
                    delta = params[4] * (hebb + params[3])
                else:
                    delta = hebb
                w[j, i] = min(max(w[j, i] + delta, -clip), clip)
                synapse += 1
    return updated


def test_spec_shapes_and_counts():
    spec = NetworkSpec()
    assert spec.layer_shapes == [(128, 28), (64, 128), (8, 64)]
    assert spec.connection_count == 12288
    assert (spec.obs_dim, spec.act_dim) == (28, 8)


def test_spec_rejects_single_layer():
    with pytest.raises(ValueError):
        NetworkSpec(layer_sizes=[4])


def test_forward_is_pure_and_records_activations():
    network = plastic_network([3, 4, 2])
    obs = np.array([0.3, -1.2, 2.0])
    first = network.forward(obs)
    second = network.forward(obs)
    assert np.array_equal(first, second)
    assert [a.shape for a in network.last_activations] == [(3,), (4,), (2,)]
    assert np.array_equal(network.last_activations[0], obs)
    assert np.all(np.abs(first) < 1.0)


def test_forward_rejects_wrong_observation_length():
    network = plastic_network([3, 2])
    with pytest.raises(InputShapeError):
        network.forward(np.zeros(4))


def test_update_before_forward_is_a_state_error():
    network = plastic_network([3, 2])
    rule_set = init_rules(6, RuleVariant.ABCD_ALPHA, 0, 6)
    with pytest.raises(NetworkStateError):
        network.hebbian_update(rule_set)


def test_zero_rules_leave_weights_unchanged():
    network = plastic_network([3, 4, 2])
    rule_set = RuleSet(RuleVariant.ABCD_ALPHA, np.zeros((20, 5)), np.arange(20))
    before = [w.copy() for w in network.weights]
    for step in range(5):
        network.forward(np.full(3, step - 2.0))
        network.hebbian_update(rule_set)
    for w, w0 in zip(network.weights, before):
        assert np.array_equal(w, w0)


@pytest.mark.parametrize("variant", [RuleVariant.ABCD_ALPHA, RuleVariant.ABC])
def test_vectorized_update_matches_scalar_reference(variant):
    rng = np.random.default_rng(42)
    for instance in range(500):
        sizes = [int(n) for n in rng.integers(1, 5, size=rng.integers(2, 4))]
        network = plastic_network(sizes, variant, seed=instance)
        n_synapses = network.spec.connection_count
        n_rules = int(rng.integers(1, n_synapses + 1))
        rule_set = init_rules(n_rules, variant, instance, n_synapses)
        rule_set.rules = rng.normal(0.0, 1.0, size=rule_set.rules.shape)
        network.weights = [rng.uniform(-4.5, 4.5, size=w.shape) for w in network.weights]
        network.forward(rng.normal(0.0, 2.0, size=sizes[0]))

        expected = scalar_update(network.weights, network.last_activations, rule_set, network.spec.weight_clip)
        network.hebbian_update(rule_set)
        for w, reference in zip(network.weights, expected):
            np.testing.assert_allclose(w, reference, rtol=0.0, atol=1e-12)


def test_weights_stay_clamped():
    network = plastic_network([3, 3, 2])
    rule_set = RuleSet(RuleVariant.ABCD_ALPHA, np.array([[2.0, 1.0, 1.0, 3.0, 1.0]]), np.zeros(15, dtype=int))
    for _ in range(50):
        network.forward(np.ones(3))
        network.hebbian_update(rule_set)
        assert max(np.max(np.abs(w)) for w in network.weights) <= 5.0


def test_returned_deltas_are_taken_before_clamping():
    network = plastic_network([1, 1])
    network.weights = [np.array([[4.9]])]
    rule_set = RuleSet(RuleVariant.ABCD_ALPHA, np.array([[0.0, 0.0, 0.0, 2.0, 0.5]]), np.array([0]))
    network.forward(np.array([1.0]))
    deltas = network.hebbian_update(rule_set, return_deltas=True)
    assert deltas[0][0, 0] == pytest.approx(1.0)
    assert network.weights[0][0, 0] == 5.0


def test_static_genome_round_trip():
    network = FeedForwardNetwork(NetworkSpec(layer_sizes=[3, 4, 2]))
    genome = np.arange(20, dtype=float)
    network.set_genome_static(genome)
    assert network.weights[0][1, 0] == 3.0
    assert network.weights[1][0, 0] == 12.0
    assert np.array_equal(network.get_genome_static(), genome)


def test_static_genome_length_is_checked():
    network = FeedForwardNetwork(NetworkSpec(layer_sizes=[3, 2]))
    with pytest.raises(EncodingError):
        network.set_genome_static(np.zeros(7))


def test_bind_rules_rejects_mismatches():
    network = plastic_network([3, 2])
    with pytest.raises(EncodingError):
        network.bind_rules(init_rules(3, RuleVariant.ABCD_ALPHA, 0, 5))
    with pytest.raises(EncodingError):
        network.bind_rules(init_rules(3, RuleVariant.ABC, 0, 6))


def test_init_weights_is_seeded_and_bounded():
    a = plastic_network([28, 16, 8], seed=7)
    b = plastic_network([28, 16, 8], seed=7)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
        assert np.max(np.abs(wa)) <= 0.1


def test_forward_single_synapse():
    network = FeedForwardNetwork(NetworkSpec(layer_sizes=[1, 1]))
    network.weights = [np.array([[0.5]])]
    assert network.forward(np.array([1.0]))[0] == pytest.approx(0.462117, abs=1e-6)


def test_init_weights_are_centered_and_depend_on_the_seed():
    network = FeedForwardNetwork(NetworkSpec(layer_sizes=[100, 100]))
    network.init_weights(0)
    first = network.weights[0].copy()
    assert first.size == 10000
    assert abs(first.mean()) < 0.005
    network.init_weights(1)
    assert not np.array_equal(first, network.weights[0])


def test_rule_arrays_are_read_only_and_replacing_them_rebinds():
    network = plastic_network([1, 1])
    network.weights = [np.array([[0.0]])]
    rule_set = RuleSet(RuleVariant.ABCD_ALPHA, np.array([[0.0, 0.0, 0.0, 1.0, 1.0]]), np.array([0]))
    with pytest.raises(ValueError):
        rule_set.rules[0, 3] = -1.0
    with pytest.raises(ValueError):
        rule_set.assignment[0] = 0
    network.forward(np.array([1.0]))
    network.hebbian_update(rule_set)
    assert network.weights[0][0, 0] == 1.0

    rule_set.rules = np.array([[0.0, 0.0, 0.0, -1.0, 1.0]])
    network.forward(np.array([1.0]))
    network.hebbian_update(rule_set)
    assert network.weights[0][0, 0] == 0.0

"""Tests for the positional embedding, sine initialisation, trunk and expert heads."""

import numpy as np
import pytest

from CoordNet.Embedding import PositionalEmbedding, TwoLayerSiren, embed, eval_two_layer, init_network
from CoordNet.Network import ExpertHeads, Trunk, eval_basis
from DiffKernel.Tensor import DimensionError, ParamStore


def _embedding(W, b, omega0):
    store = ParamStore()
    store.add('embed/W', W)
    store.add('embed/b', b)
    return PositionalEmbedding(store, omega0=omega0)


def test_embed_zero_parameters():
    pe = _embedding(np.zeros((2, 5)), np.zeros(5), 30.0)
    assert np.array_equal(embed([[0.3, -0.7]], pe), np.zeros((1, 5)))


def test_embed_single_frequency():
    pe = _embedding([[1.0]], [0.0], 1.0)
    assert embed([[np.pi / 2]], pe)[0, 0] == pytest.approx(1.0)


def test_embed_matches_scalar_loop(rng):
    W = rng.normal(size=(2, 7))
    b = rng.normal(size=7)
    pe = _embedding(W, b, 30.0)
    x = rng.uniform(-1, 1, size=(4, 2))

    expected = np.zeros((4, 7))
    for row in range(4):
        for i in range(7):
            expected[row, i] = np.sin(30.0 * (W[0, i] * x[row, 0] + W[1, i] * x[row, 1] + b[i]))
    assert np.allclose(embed(x, pe), expected, atol=1e-12)


def test_embed_rejects_wrong_dimension():
    pe = _embedding(np.zeros((2, 3)), np.zeros(3), 30.0)
    with pytest.raises(DimensionError):
        embed([[0.0, 0.0, 0.0]], pe)


def test_two_layer_constant_when_alpha_zero():
    model = TwoLayerSiren.create(2, 6, seed=1)
    model.store['siren/alpha'] = np.zeros(6)
    model.store['siren/c'] = [0.7]
    assert np.allclose(eval_two_layer(model, np.random.default_rng(0).uniform(-1, 1, (5, 2))), 0.7)


def test_two_layer_single_term():
    model = TwoLayerSiren.create(1, 1, omega0=1.0)
    model.store['embed/W'] = [[1.0]]
    model.store['embed/b'] = [0.0]
    model.store['siren/alpha'] = [1.0]
    model.store['siren/c'] = [0.0]
    assert eval_two_layer(model, [[np.pi / 2]])[0] == pytest.approx(1.0)


def test_two_layer_matches_scalar_sum(rng):
    model = TwoLayerSiren.create(2, 9, omega0=30.0, seed=5)
    x = rng.uniform(-1, 1, size=(3, 2))
    W, b = model.embedding.W, model.embedding.b

    expected = []
    for point in x:
        total = model.c
        for i in range(9):
            total += model.alpha[i] * np.sin(30.0 * (W[:, i] @ point + b[i]))
        expected.append(total)
    assert np.allclose(eval_two_layer(model, x), expected, atol=1e-9)


def test_init_network_is_seeded():
    a = init_network([2, 8, 8, 1], seed=4)
    b = init_network([2, 8, 8, 1], seed=4)
    assert a.checksum() == b.checksum()
    assert init_network([2, 8, 8, 1], seed=5).checksum() != a.checksum()


def test_init_network_bounds():
    store = init_network([6, 6, 6], seed=0)
    for name in store.names():
        if name.endswith('/W'):
            assert np.all(np.abs(store[name]) <= 1.0)
    assert np.all(np.abs(store['layer/0/W']) <= 1.0 / 6.0)


def test_init_network_weight_mean():
    store = init_network([4, 400, 400], seed=0)
    weights = store['layer/1/W']
    bound = np.sqrt(6.0 / 400)
    sigma = bound / np.sqrt(3.0) / np.sqrt(weights.size)
    assert abs(weights.mean()) < 3.0 * sigma


def test_init_network_rejects_bad_dims():
    with pytest.raises(ValueError):
        init_network([3])
    with pytest.raises(ValueError):
        init_network([3, 0, 1])


def _basis_network(n=3, activation='sine', seed=0):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    pe = PositionalEmbedding.create(store, 2, 6, rng=rng)
    trunk = Trunk.create(store, pe, 5, 1, activation=activation, rng=rng)
    heads = ExpertHeads.create(store, n, trunk.width, 4, 2, activation=activation, rng=rng)
    return store, trunk, heads


def test_same_expert_twice_gives_identical_columns(rng):
    _, trunk, heads = _basis_network()
    values = eval_basis(trunk, heads, [1, 1], rng.uniform(-1, 1, (6, 2)))
    assert values.shape == (6, 2, 2)
    assert np.array_equal(values[:, 0], values[:, 1])


def test_zeroed_output_layer_gives_zero_basis(rng):
    store, trunk, heads = _basis_network()
    store['heads/W2'] = np.zeros_like(store['heads/W2'])
    store['heads/b2'] = np.zeros_like(store['heads/b2'])
    assert np.array_equal(eval_basis(trunk, heads, [0, 2], rng.uniform(-1, 1, (4, 2))), np.zeros((4, 2, 2)))


@pytest.mark.parametrize('activation', ['sine', 'relu'])
def test_basis_matches_manual_composition(rng, activation):
    store, trunk, heads = _basis_network(n=2, activation=activation)
    x = rng.uniform(-1, 1, size=(3, 2))
    act = np.sin if activation == 'sine' else (lambda z: np.maximum(z, 0))

    features = np.sin(30.0 * (x @ store['embed/W'] + store['embed/b']))
    features = act(features @ store['trunk/0/W'] + store['trunk/0/b'])
    for j in range(2):
        head = heads[j]
        expected = act(features @ head.W1 + head.b1) @ head.W2 + head.b2
        assert np.allclose(eval_basis(trunk, heads, [j], x)[:, 0], expected, atol=1e-12)


def test_expert_index_is_checked(rng):
    _, trunk, heads = _basis_network(n=3)
    with pytest.raises(IndexError):
        heads[3]
    with pytest.raises(IndexError):
        eval_basis(trunk, heads, [0, 3], rng.uniform(-1, 1, (2, 2)))


def test_evaluation_counters(rng):
    _, trunk, heads = _basis_network(n=3)
    eval_basis(trunk, heads, [0, 2], rng.uniform(-1, 1, (5, 2)))
    eval_basis(trunk, heads, [1], rng.uniform(-1, 1, (5, 2)))
    assert trunk.evaluations == 2
    assert heads.evaluations == 3


def test_unknown_activation():
    store = ParamStore()
    with pytest.raises(ValueError):
        ExpertHeads(store, activation='tanh')

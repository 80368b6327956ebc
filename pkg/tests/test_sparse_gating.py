"""Tests for top-k sparse codes, balance penalties and the two gate kinds."""

import numpy as np
import pytest

from DiffKernel.GradCheck import finite_diff_check
from DiffKernel.Tape import Tape, backward
from DiffKernel.Tensor import DimensionError, ParamStore
from NidLayer.Gating import (EncoderGate, GateTable, GatingMode, gate_codes, gating_mode,
                             observation_summary, raw_gates)
from NidLayer.Sparse import (DegenerateGateError, SparseCode, codes_to_dense, cv_penalty,
                             l1_penalty, sparsify, sparsify_tensor)


def test_sparsify_hand_example():
    code = sparsify([-3.0, 1.0, 2.0], 2)
    assert code.indices.tolist() == [0, 2]
    assert np.allclose(code.weights, [-3.0 / np.sqrt(13.0), 2.0 / np.sqrt(13.0)])


def test_sparsify_full_budget_on_unit_vector():
    h = np.array([0.6, 0.0, -0.8, 0.0])
    assert np.allclose(sparsify(h, 4).dense(), h)


def test_sparsify_is_scale_invariant(rng):
    h = rng.normal(size=10)
    # Power-of-two scales pass through the normalisation without rounding.
    assert sparsify(h, 3) == sparsify(4.0 * h, 3)
    assert sparsify(h, 3) == sparsify(0.25 * h, 3)

    code, scaled = sparsify(h, 3), sparsify(5.0 * h, 3)
    assert code.indices.tolist() == scaled.indices.tolist()
    np.testing.assert_allclose(scaled.weights, code.weights, rtol=1e-12)


def test_sparsify_ties_prefer_lower_index():
    assert sparsify([1.0, -1.0, 1.0, 0.5], 2).indices.tolist() == [0, 1]


def test_sparsify_drops_zero_entries():
    code = sparsify([0.0, 2.0, 0.0, 0.0], 3)
    assert len(code) == 1
    assert code.weights[0] == pytest.approx(1.0)


def test_sparsify_degenerate_gate():
    with pytest.raises(DegenerateGateError):
        sparsify(np.zeros(4), 2)


def test_sparsify_budget_is_checked():
    with pytest.raises(ValueError):
        sparsify([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        sparsify([1.0, 2.0], 0)


def test_sparsify_invariants_on_random_gates():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 33))
        k = int(rng.integers(1, n + 1))
        h = rng.normal(size=n)
        code = sparsify(h, k)

        assert len(code) <= k
        assert code.norm == pytest.approx(1.0, abs=1e-9)
        kept = np.abs(h[code.indices]).min()
        dropped = np.delete(np.abs(h), code.indices)
        assert dropped.size == 0 or kept >= dropped.max()
        assert np.all(np.sign(code.weights) == np.sign(h[code.indices]))


def test_sparsify_blocks_are_independent():
    tape = Tape()
    h = np.array([[3.0, 1.0, -2.0, 0.5, 0.1, 4.0]])
    codes = sparsify_tensor(tape, h, 1, blocks=2).data[0]
    assert np.allclose(codes, [1.0, 0.0, 0.0, 0.0, 0.0, 1.0])


def test_sparsify_gradient_is_zero_on_dropped_entries(rng):
    store = ParamStore()
    store.add('h', rng.normal(size=(3, 8)))
    weights = rng.normal(size=(3, 8))

    tape = Tape()
    codes = sparsify_tensor(tape, tape.param(store, 'h'), 3)
    backward(tape, tape.sum(tape.mul(codes, weights)))

    dropped = codes.data == 0
    assert np.all(store.grads['h'][dropped] == 0)
    assert np.any(store.grads['h'][~dropped] != 0)


def test_sparsify_gradient_matches_finite_differences():
    store = ParamStore()
    # Well separated magnitudes so small perturbations never change the support.
    store.add('h', [[0.9, -0.1, 2.0, -1.5, 0.3], [-0.2, 1.1, 0.05, 0.7, -2.4]])
    weights = np.random.default_rng(3).normal(size=(2, 5))

    def loss(tape):
        return tape.sum(tape.mul(sparsify_tensor(tape, tape.param(store, 'h'), 2), weights))

    assert finite_diff_check(loss, store, h=1e-6) < 1e-6


def test_sparse_code_validation():
    with pytest.raises(ValueError):
        SparseCode([(1, 0.5), (1, 0.2)], 2, 4)
    with pytest.raises(IndexError):
        SparseCode([(4, 0.5)], 1, 4)
    assert SparseCode.from_dense([0.0, 0.5, 0.0, -0.5]).indices.tolist() == [1, 3]


@pytest.mark.parametrize('codes, expected', [
    ([[1.0, 1.0, 1.0]], 0.0),
    ([[2.0, 0.0]], 1.0),
    ([[-3.0, -3.0, -3.0, -3.0]], 0.0),
])
def test_cv_penalty_values(codes, expected):
    assert cv_penalty(np.array(codes), len(codes[0])) == pytest.approx(expected)


def test_cv_penalty_sums_over_the_batch():
    codes = [SparseCode([(0, 1.0)], 1, 2), SparseCode([(1, 1.0)], 1, 2)]
    assert cv_penalty(codes, 2) == pytest.approx(0.0)


def test_cv_penalty_absolute_variant():
    codes = np.array([[1.0, -1.0]])
    assert cv_penalty(codes, 2) > 1.0
    assert cv_penalty(codes, 2, absolute=True) == pytest.approx(0.0)


def test_cv_penalty_empty_batch():
    with pytest.raises(ValueError):
        codes_to_dense([], 3)


@pytest.mark.parametrize('gates, expected', [
    ([[0.0, 0.0]], 0.0),
    ([[1.0, -2.0]], 3.0),
    ([[1.0, 0.0], [0.5, 0.5]], 2.0),
])
def test_l1_penalty_values(gates, expected):
    assert l1_penalty(np.array(gates)) == pytest.approx(expected)


@pytest.mark.parametrize('epoch, warmup, expected', [
    (0, 10, GatingMode.DENSE_L1),
    (9, 10, GatingMode.DENSE_L1),
    (10, 10, GatingMode.HARD_TOP_K),
    (0, 0, GatingMode.HARD_TOP_K),
])
def test_gating_mode(epoch, warmup, expected):
    assert gating_mode(epoch, warmup) is expected


def test_gating_mode_rejects_negative_epoch():
    with pytest.raises(ValueError):
        gating_mode(-1, 10)


def test_gate_table_rows():
    store = ParamStore()
    table = GateTable.create(store, 3, 3)
    store['gate/table'] = np.eye(3)
    for i in range(3):
        assert np.array_equal(raw_gates(table, i), np.eye(3)[i])
    with pytest.raises(IndexError):
        raw_gates(table, 3)


def test_zero_encoder_gives_zero_gates():
    store = ParamStore()
    encoder = EncoderGate.create(store, 4, 6, 5)
    for name in encoder.names():
        store[name] = np.zeros_like(store[name])
    assert np.array_equal(raw_gates(encoder, np.ones(4)), np.zeros(5))


def test_single_layer_encoder_is_affine(rng):
    store = ParamStore()
    encoder = EncoderGate.create(store, 4, 0, 5, rng=rng)
    assert not encoder.has_hidden
    assert encoder.shape_header == (4, 0)

    summary = rng.normal(size=4)
    expected = summary @ store['encoder/out/W'] + store['encoder/out/b']
    assert np.allclose(raw_gates(encoder, summary), expected)


def test_encoder_checks_summary_size():
    store = ParamStore()
    encoder = EncoderGate.create(store, 4, 3, 5)
    with pytest.raises(DimensionError):
        raw_gates(encoder, np.ones(3))


def test_gate_codes_by_mode(rng):
    store = ParamStore()
    table = GateTable.create(store, 4, 6, rng=rng)

    tape = Tape()
    raw, codes = gate_codes(tape, table, [0, 2], 2, GatingMode.DENSE_L1)
    assert raw is codes

    tape = Tape()
    raw, codes = gate_codes(tape, table, [0, 2], 2, GatingMode.HARD_TOP_K)
    assert np.all((codes.data != 0).sum(axis=1) == 2)
    assert np.allclose(np.linalg.norm(codes.data, axis=1), 1.0)


def test_observation_summary_cells():
    omega = np.array([[-0.9, -0.9], [-0.8, -0.9], [0.9, 0.9]])
    values = np.array([[1.0], [3.0], [5.0]])
    summary = observation_summary(omega, values, 2)
    assert summary.shape == (4,)
    assert np.allclose(summary, [2.0, 0.0, 0.0, 5.0])

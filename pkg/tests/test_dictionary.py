"""Tests for the patch grid and the dictionary's code-weighted evaluation."""

import logging

import numpy as np
import pytest

from DiffKernel.Tape import Tape
from DiffKernel.Tensor import DimensionError
from NidLayer.Dictionary import Dictionary, basis_values, combine
from NidLayer.Patches import PatchGrid, patch_dispatch
from NidLayer.Sparse import SparseCode


@pytest.fixture
def dictionary():
    return Dictionary.create(4, 2, 2, n_freq=8, trunk_width=8, trunk_layers=1, head_width=4, seed=2)


def test_patch_center_is_owned_by_one_patch():
    grid = PatchGrid([2], overlap=0.2)
    assert patch_dispatch(grid, [[-0.5]]) == [[(0, 1.0)]]


def test_patch_band_midpoint_splits_evenly():
    grid = PatchGrid([2], overlap=0.2)
    assert patch_dispatch(grid, [[0.0]]) == [[(0, 0.5), (1, 0.5)]]


def test_patch_without_overlap_is_a_hard_assignment(rng):
    grid = PatchGrid([3, 2])
    for entry in patch_dispatch(grid, rng.uniform(-1, 1, size=(50, 2))):
        assert len(entry) == 1
        assert entry[0][1] == 1.0


def test_patch_weights_are_a_partition_of_unity(rng):
    grid = PatchGrid([3, 4], overlap=0.3)
    dispatch = patch_dispatch(grid, rng.uniform(-1, 1, size=(200, 2)))
    for entry in dispatch:
        assert 1 <= len(entry) <= 4
        assert sum(weight for _, weight in entry) == pytest.approx(1.0)


def test_patch_weights_ramp_linearly():
    grid = PatchGrid([2], overlap=0.2)
    ids, weights = grid.dispatch([[-0.1], [0.1]])
    weights = {(row, int(p)): w for row in range(2) for p, w in zip(ids[row], weights[row]) if w > 0}
    assert weights[(0, 0)] == pytest.approx(0.75)
    assert weights[(1, 1)] == pytest.approx(0.75)


def test_patch_clamps_outside_coordinates(caplog):
    grid = PatchGrid([2, 2])
    with caplog.at_level(logging.WARNING):
        assert patch_dispatch(grid, [[1.5, -2.0]]) == [[(2, 1.0)]]
    assert 'Clamping' in caplog.text


def test_patch_grid_validation():
    with pytest.raises(ValueError):
        PatchGrid([0, 2])
    with pytest.raises(ValueError):
        PatchGrid([2, 2], overlap=0.5)
    with pytest.raises(DimensionError):
        PatchGrid([2, 2]).clamp(np.zeros((1, 3)))


def test_local_coords_cover_the_patch():
    grid = PatchGrid([2, 2], overlap=0.25)
    corner = grid.local_coords(np.array([[-1.0, -1.0]]), 0)
    assert np.all(np.abs(corner) <= 1.0)
    assert np.allclose(grid.local_coords(grid.center(3)[None, :], 3), 0.0)


def test_one_hot_code_reproduces_the_atom(dictionary, rng):
    x = rng.uniform(-1, 1, size=(10, 2))
    for j in range(dictionary.n):
        values = combine(dictionary, SparseCode([(j, 1.0)], 1, 4), x)
        assert np.allclose(values, basis_values(dictionary, x, [j])[:, 0])


def test_two_expert_code_is_the_weighted_sum(dictionary, rng):
    x = rng.uniform(-1, 1, size=(10, 2))
    atoms = basis_values(dictionary, x, [1, 3])
    values = combine(dictionary, SparseCode([(1, 0.3), (3, -1.2)], 2, 4), x)
    assert np.allclose(values, 0.3 * atoms[:, 0] - 1.2 * atoms[:, 1])


def test_zero_code_is_the_zero_function(dictionary, rng, caplog):
    x = rng.uniform(-1, 1, size=(5, 2))
    with caplog.at_level(logging.WARNING):
        assert np.array_equal(combine(dictionary, SparseCode([], 1, 4), x), np.zeros((5, 2)))
    assert 'empty code' in caplog.text

    values = dictionary.evaluate(Tape(), x, np.zeros((2, 4))).data
    assert np.array_equal(values, np.zeros((2, 5, 2)))


def test_combine_rejects_out_of_range_index(dictionary):
    with pytest.raises(IndexError):
        combine(dictionary, [(4, 1.0)], np.zeros((1, 2)))


def test_only_coded_experts_are_evaluated(dictionary, rng):
    x = rng.uniform(-1, 1, size=(6, 2))
    before = dictionary.head_evaluations
    combine(dictionary, SparseCode([(0, 1.0), (2, 0.5)], 2, 4), x)
    two = dictionary.head_evaluations - before

    before = dictionary.head_evaluations
    combine(dictionary, SparseCode([(2, 1.0)], 1, 4), x)
    one = dictionary.head_evaluations - before
    assert one <= two
    assert (one, two) == (1, 2)


def test_per_instance_coordinates_match_shared_evaluation(dictionary, rng):
    x = rng.uniform(-1, 1, size=(2, 7, 2))
    codes = rng.normal(size=(2, 4))
    stacked = dictionary.evaluate(Tape(), x, codes).data
    for i in range(2):
        shared = dictionary.evaluate(Tape(), x[i], codes[i:i + 1]).data[0]
        assert np.allclose(stacked[i], shared)


def test_evaluate_checks_shapes(dictionary):
    with pytest.raises(DimensionError):
        dictionary.evaluate(Tape(), np.zeros((3, 2)), np.ones((1, 5)))
    with pytest.raises(DimensionError):
        dictionary.evaluate(Tape(), np.zeros((3, 3)), np.ones((1, 4)))
    with pytest.raises(DimensionError):
        dictionary.evaluate(Tape(), np.zeros((3, 4, 2)), np.ones((2, 4)))


def test_patchwise_evaluation_blends_patch_atoms(rng):
    grid = PatchGrid([2, 1], overlap=0.2)
    dictionary = Dictionary.create(3, 2, 1, n_freq=8, trunk_width=8, trunk_layers=1, head_width=4, grid=grid, seed=1)
    assert dictionary.code_width == 6

    x = rng.uniform(-1, 1, size=(40, 2))
    code = rng.normal(size=6)
    values = dictionary.evaluate(Tape(), x, code[None, :]).data[0, :, 0]

    expected = np.zeros(40)
    for row, entry in enumerate(patch_dispatch(grid, x)):
        for patch, weight in entry:
            atoms = basis_values(dictionary, x[row:row + 1], [0, 1, 2], patch=patch)[0, :, 0]
            expected[row] += weight * atoms @ code[patch * 3:(patch + 1) * 3]
    assert np.allclose(values, expected)


def test_parameter_count_of_a_tiny_dictionary():
    dictionary = Dictionary.create(2, 2, 1, n_freq=4, trunk_width=3, trunk_layers=1, head_width=2)
    # embedding 2·4 + 4, trunk 4·3 + 3, heads 2·(3·2 + 2 + 2·1 + 1)
    assert dictionary.parameter_count() == 12 + 15 + 22


def test_attach_rebuilds_identical_views(dictionary, rng):
    again = Dictionary.attach(dictionary.store, 2, 1, 'sine', dictionary.grid, dictionary.omega0)
    x = rng.uniform(-1, 1, size=(4, 2))
    codes = rng.normal(size=(1, 4))
    assert np.array_equal(again.evaluate(Tape(), x, codes).data, dictionary.evaluate(Tape(), x, codes).data)
    assert again.checksum() == dictionary.checksum()

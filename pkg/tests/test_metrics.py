"""Tests for the image and surface metrics, the metric report and the throughput bench."""

import numpy as np
import pytest

from DiffKernel.Tensor import DimensionError
from neural_implicit_dict.Bench import bench_code, bench_throughput
from neural_implicit_dict.Metrics import (MetricReport, capped, chamfer, matched_normal_consistency,
                                          normal_consistency, psnr, ssim)


def test_psnr_of_identical_images_is_capped(rng):
    image = rng.uniform(size=(8, 8))
    assert psnr(image, image) == float('inf')
    assert capped(psnr(image, image)) == 99.0


@pytest.mark.parametrize('offset, expected', [(0.1, 20.0), (1.0, 0.0), (0.01, 40.0)])
def test_psnr_of_a_constant_offset(offset, expected):
    a = np.zeros((4, 4, 3))
    assert psnr(a, a + offset) == pytest.approx(expected)


def test_psnr_with_a_mask():
    a = np.zeros((2, 2))
    b = np.array([[0.1, 5.0], [0.1, 0.1]])
    mask = np.array([[True, False], [True, True]])
    assert psnr(a, b, mask=mask) == pytest.approx(20.0)


def test_psnr_shapes_must_match():
    with pytest.raises(DimensionError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


def test_ssim_of_identical_images(rng):
    image = rng.uniform(size=(12, 10, 3))
    assert ssim(image, image) == pytest.approx(1.0)


def test_ssim_of_a_negated_image_is_lower(rng):
    image = rng.uniform(size=(16, 16))
    assert ssim(image, 1.0 - image) < 1.0
    assert ssim(image, 1.0 - image) < ssim(image, image + 0.01)


def test_ssim_single_window_formula(rng):
    a = rng.uniform(size=(8, 8))
    b = np.clip(a + rng.normal(0.0, 0.1, size=(8, 8)), 0, 1)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    covariance = np.mean(a * b) - a.mean() * b.mean()
    expected = ((2 * a.mean() * b.mean() + c1) * (2 * covariance + c2)) / \
               ((a.mean() ** 2 + b.mean() ** 2 + c1) * (a.var() + b.var() + c2))
    assert ssim(a, b) == pytest.approx(expected)


def test_ssim_needs_a_full_window():
    with pytest.raises(DimensionError):
        ssim(np.zeros((7, 9)), np.zeros((7, 9)))


def test_chamfer_of_identical_sets(rng):
    points = rng.uniform(size=(20, 2))
    assert chamfer(points, points) == 0.0


def test_chamfer_of_two_single_points():
    assert chamfer([[0.0, 0.0]], [[1.0, 0.0]]) == pytest.approx(1.0)


def test_chamfer_matches_brute_force(rng):
    P = rng.uniform(size=(30, 3))
    Q = rng.uniform(size=(17, 3))
    distances = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)
    expected = 0.5 * (distances.min(axis=1).mean() + distances.min(axis=0).mean())
    assert chamfer(P, Q) == pytest.approx(expected)


def test_chamfer_needs_points():
    with pytest.raises(ValueError):
        chamfer(np.zeros((0, 2)), [[0.0, 0.0]])


def test_normal_consistency():
    assert normal_consistency([[1.0, 0.0]], [[-1.0, 0.0]]) == pytest.approx(1.0)
    assert normal_consistency([[1.0, 0.0]], [[0.0, 1.0]]) == pytest.approx(0.0)
    assert normal_consistency([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        normal_consistency([[0.0, 0.0]], [[1.0, 0.0]])


def test_matched_normal_consistency_on_a_circle():
    angles = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    coarse = normals[::2]
    assert matched_normal_consistency(0.5 * normals, normals, 0.5 * coarse, -coarse) == pytest.approx(1.0, abs=0.05)


def test_metric_report_table():
    report = MetricReport(['psnr', 'ssim'])
    report.add(1, psnr=float('inf'), ssim=0.5)
    report.add(0, psnr=30.0, ssim=0.7)
    header, rows = report.table()
    assert header == ['instance', 'psnr', 'ssim']
    assert [row[0] for row in rows] == [0, 1, 'mean']
    assert rows[1][1] == 99.0
    assert rows[2][2] == pytest.approx(0.6)
    assert len(report) == 2

    with pytest.raises(KeyError):
        report.add(2, psnr=1.0)


def test_metric_report_scales_columns():
    report = MetricReport(['chamfer'])
    report.add(0, chamfer=0.002)
    _, rows = report.table(scale={'chamfer': 1000.0})
    assert rows[0][1] == pytest.approx(2.0)


def test_bench_code_uses_the_first_experts(tiny_model):
    alpha = bench_code(tiny_model, k=2)
    assert alpha.tolist() == pytest.approx([1 / np.sqrt(2), 1 / np.sqrt(2), 0.0, 0.0])


def test_bench_throughput(tiny_model):
    before = tiny_model.dictionary.head_evaluations
    throughput, params = bench_throughput(tiny_model, 8, 3, k=1)
    assert throughput > 0
    assert params == tiny_model.parameter_count()
    assert tiny_model.dictionary.head_evaluations - before == 4


def test_bench_needs_a_repetition(tiny_model):
    with pytest.raises(ValueError):
        bench_throughput(tiny_model, 8, 0)

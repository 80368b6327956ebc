#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial import cKDTree

from DiffKernel.Tensor import DimensionError


PSNR_CAP = 99.0
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b, name):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError('{}: images have shapes {} and {}'.format(name, a.shape, b.shape))
    return a, b


def psnr(a, b, peak=1.0, mask=None):
    """10·log10(peak² / MSE) in dB; +inf for identical inputs. `mask` restricts to selected pixels."""
    a, b = _pair(a, b, 'psnr')
    diff = a - b
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return float('inf')
    return float(10.0 * np.log10(peak * peak / mse))


def capped(value, cap=PSNR_CAP):
    return min(value, cap)


def ssim(a, b, dynamic_range=1.0):
    """Mean SSIM over all 8×8 windows (stride 1) and channels, population statistics."""
    a, b = _pair(a, b, 'ssim')
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DimensionError('ssim: image {} is smaller than the {}x{} window'.format(a.shape[:2], SSIM_WINDOW, SSIM_WINDOW))

    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    window = (SSIM_WINDOW, SSIM_WINDOW)

    # [rows × cols × C × 8 × 8]
    wa = sliding_window_view(a, window, axis=(0, 1))
    wb = sliding_window_view(b, window, axis=(0, 1))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = wa.var(axis=(-2, -1))
    var_b = wb.var(axis=(-2, -1))
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b

    index = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(index.mean())


def _points(P, name):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    if not len(P):
        raise ValueError('{}: point set is empty'.format(name))
    return P


def chamfer(P, Q):
    """Symmetric mean of nearest-neighbour Euclidean distances, halved."""
    P, Q = _points(P, 'chamfer'), _points(Q, 'chamfer')
    forward, _ = cKDTree(Q).query(P)
    backward, _ = cKDTree(P).query(Q)
    return float(0.5 * (forward.mean() + backward.mean()))


def normal_consistency(N1, N2):
    """Mean |dot| over matched unit normals."""
    N1, N2 = _pair(N1, N2, 'normal_consistency')
    if np.any(np.linalg.norm(N1, axis=-1) == 0) or np.any(np.linalg.norm(N2, axis=-1) == 0):
        raise ValueError('normal_consistency: zero-length normal')
    return float(np.mean(np.abs(np.sum(N1 * N2, axis=-1))))


def matched_normal_consistency(P, N1, Q, N2):
    """Normal consistency with each point of P matched to its nearest neighbour in Q, and vice versa."""
    P, Q = _points(P, 'normal_consistency'), _points(Q, 'normal_consistency')
    _, forward = cKDTree(Q).query(P)
    _, backward = cKDTree(P).query(Q)
    return 0.5 * (normal_consistency(N1, np.asarray(N2)[forward]) + normal_consistency(N2, np.asarray(N1)[backward]))


class MetricReport(object):
    """Per-instance metric rows and their aggregate mean, written as CSV in instance order."""

    def __init__(self, metrics):
        self.metrics = list(metrics)
        self.rows = dict()

    def add(self, instance_id, **values):
        missing = set(self.metrics) - set(values)
        if missing:
            raise KeyError('Metric row {} is missing {}'.format(instance_id, sorted(missing)))
        self.rows[instance_id] = {name: float(values[name]) for name in self.metrics}

    def __len__(self):
        return len(self.rows)

    def aggregate(self):
        return {name: float(np.mean([row[name] for row in self.rows.values()])) for name in self.metrics}

    def table(self, scale=None):
        """Header and rows (instance ascending, then 'mean'); psnr columns capped, `scale` multiplies named columns."""
        scale = scale or dict()

        def fmt(name, value):
            value = value * scale.get(name, 1.0)
            return capped(value) if name.startswith('psnr') else value

        rows = [[instance] + [fmt(name, self.rows[instance][name]) for name in self.metrics] for instance in sorted(self.rows)]
        if self.rows:
            mean = self.aggregate()
            rows.append(['mean'] + [fmt(name, mean[name]) for name in self.metrics])
        return ['instance'] + self.metrics, rows

#   Neural Implicit Dictionary
#      Released under the MIT license
#

import itertools
import logging

import numpy as np

from DiffKernel.Tensor import DimensionError


class PatchGrid(object):
    """Regular, optionally overlapping, partition of [-1,1]^m into patches.

    Each axis is cut into cells of width w = 2/p. Neighbouring cells share a
    band of half-width overlap·w around their common boundary, across which
    blend weights ramp linearly; weights are separable across axes, so every
    coordinate is covered by 1..2^m patches whose weights sum to 1.
    """

    def __init__(self, counts, overlap=0.0):
        self.counts = tuple(int(c) for c in counts)
        self.overlap = float(overlap)

        if not self.counts or any(c < 1 for c in self.counts):
            raise ValueError('Patch counts must be positive, got {}'.format(list(counts)))
        if not 0.0 <= self.overlap < 0.5:
            raise ValueError('Patch overlap must lie in [0, 0.5), got {}'.format(overlap))

    def __repr__(self):
        return 'PatchGrid(counts={}, overlap={})'.format(list(self.counts), self.overlap)

    @property
    def m(self):
        return len(self.counts)

    @property
    def patch_count(self):
        return int(np.prod(self.counts))

    @property
    def widths(self):
        return np.array([2.0 / c for c in self.counts])

    @property
    def bands(self):
        return self.overlap * self.widths

    def cell(self, patch):
        return np.unravel_index(patch, self.counts)

    def center(self, patch):
        return -1.0 + (np.asarray(self.cell(patch)) + 0.5) * self.widths

    def local_coords(self, x, patch):
        """Map coordinates into the patch's own [-1,1]^m frame (its overlap bands included)."""
        return (x - self.center(patch)) / (self.widths / 2.0 + self.bands)

    def clamp(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.m:
            raise DimensionError('Patch grid is {}-D but coordinates are {}-D'.format(self.m, x.shape[1]))
        outside = np.abs(x) > 1.0
        if outside.any():
            logging.warning('Clamping {} coordinates outside [-1, 1]^{} into the patch grid.'.format(int(outside.any(axis=1).sum()), self.m))
            x = np.clip(x, -1.0, 1.0)
        return x

    def _axis_weights(self, x, axis):
        """Two candidate cells per coordinate along one axis and their blend weights."""
        count = self.counts[axis]
        width = self.widths[axis]
        band = self.bands[axis]

        cell = np.clip(np.floor((x + 1.0) / width).astype(np.intp), 0, count - 1)
        offset = x - (-1.0 + cell * width)

        other = cell.copy()
        weight = np.ones_like(x)
        if band > 0:
            left = (offset < band) & (cell > 0)
            right = (offset > width - band) & (cell < count - 1)
            other[left] = cell[left] - 1
            other[right] = cell[right] + 1
            weight[left] = (offset[left] + band) / (2.0 * band)
            weight[right] = (width - offset[right] + band) / (2.0 * band)

        return (cell, weight), (other, 1.0 - weight)

    def dispatch(self, x):
        """Vectorised dispatch: (patch ids [B × 2^m], weights [B × 2^m]), zero-weight slots included."""
        x = self.clamp(x)
        per_axis = [self._axis_weights(x[:, axis], axis) for axis in range(self.m)]

        ids, weights = [], []
        for choice in itertools.product((0, 1), repeat=self.m):
            cells = [per_axis[axis][c][0] for axis, c in enumerate(choice)]
            weight = np.prod([per_axis[axis][c][1] for axis, c in enumerate(choice)], axis=0)
            ids.append(np.ravel_multi_index(cells, self.counts))
            weights.append(weight)

        return np.stack(ids, axis=1), np.stack(weights, axis=1)

    def covered(self, x, patch, dispatched=None):
        """Rows covered by `patch` and their summed blend weight."""
        ids, weights = dispatched if dispatched is not None else self.dispatch(x)
        weights = np.where(ids == patch, weights, 0.0).sum(axis=1)
        rows = np.flatnonzero(weights > 0)
        return rows, weights[rows]


def patch_dispatch(grid, x):
    """Per coordinate, the covering patches and their blend weights."""
    ids, weights = grid.dispatch(x)

    dispatch = []
    for row_ids, row_weights in zip(ids, weights):
        merged = dict()
        for patch, weight in zip(row_ids, row_weights):
            if weight > 0:
                merged[int(patch)] = merged.get(int(patch), 0.0) + float(weight)
        dispatch.append(sorted(merged.items()))
    return dispatch

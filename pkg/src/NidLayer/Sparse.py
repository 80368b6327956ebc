#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from DiffKernel.Tape import Tape
from DiffKernel.Tensor import Tensor, DimensionError


CV_EPSILON = 1e-8


class DegenerateGateError(ValueError):
    pass


class SparseCode(object):
    """A k-sparse coefficient vector stored as (expert index, weight) entries.

    For patch-wise dictionaries the index runs over all patch blocks, so
    expert j of patch p is index p * n + j.
    """

    def __init__(self, entries, k, n):
        self.entries = [(int(i), float(w)) for i, w in entries]
        self.k = int(k)
        self.n = int(n)

        indices = self.indices
        if len(set(indices.tolist())) != len(indices):
            raise ValueError('SparseCode indices must be unique, got {}'.format(indices.tolist()))
        if len(indices) and (indices.min() < 0 or indices.max() >= n):
            raise IndexError('SparseCode index out of range for {} experts: {}'.format(n, indices.tolist()))

    @classmethod
    def from_dense(cls, alpha, k=None):
        alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
        support = np.flatnonzero(alpha)
        return cls(zip(support, alpha[support]), k if k is not None else len(support), alpha.size)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        if not isinstance(other, SparseCode):
            return NotImplemented
        return self.n == other.n and self.entries == other.entries

    def __repr__(self):
        return 'SparseCode(k={}, n={}, entries={})'.format(self.k, self.n, self.entries)

    @property
    def indices(self):
        return np.array([i for i, _ in self.entries], dtype=np.intp)

    @property
    def weights(self):
        return np.array([w for _, w in self.entries], dtype=np.float64)

    @property
    def norm(self):
        return float(np.linalg.norm(self.weights))

    def dense(self, n=None):
        alpha = np.zeros(n if n is not None else self.n)
        if self.entries:
            alpha[self.indices] = self.weights
        return alpha


def _check_budget(k, n):
    if not 1 <= k <= n:
        raise ValueError('Sparsity budget k={} must satisfy 1 <= k <= {}'.format(k, n))


def _top_k_mask(h, k, blocks):
    """Boolean keep-mask for abs-top-k per row and per block; zero entries are never kept."""
    rows, width = h.shape
    n = width // blocks
    blocked = h.reshape(rows, blocks, n)

    # Stable sort on -|h| keeps the lower index first among ties.
    order = np.argsort(-np.abs(blocked), axis=-1, kind='stable')[..., :k]
    mask = np.zeros(blocked.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    mask &= blocked != 0

    empty = ~mask.any(axis=-1)
    if empty.any():
        row, block = np.argwhere(empty)[0]
        raise DegenerateGateError('Gate row {} (block {}) is all zero; cannot normalise a top-{} code.'.format(row, block, k))
    return mask.reshape(rows, width)


def sparsify_tensor(tape, h, k, blocks=1):
    """Abs-top-k per block of each gate row, then l2-normalise the kept entries.

    `h` is [I × blocks·n]. The result is dense with zeros at dropped entries.
    Dropped entries receive exactly zero gradient; kept entries receive the
    exact normalisation Jacobian (g - y (y·g)) / ||h_S||.
    """
    h = tape._lift(h)
    if h.ndim != 2 or h.shape[1] % blocks:
        raise DimensionError('sparsify: gates {} do not split into {} blocks'.format(h.shape, blocks))
    rows, width = h.shape
    n = width // blocks
    _check_budget(k, n)

    mask = _top_k_mask(h.data, k, blocks)
    kept = np.where(mask, h.data, 0).reshape(rows, blocks, n)
    norms = np.sqrt((kept * kept).sum(axis=-1, keepdims=True))
    y = kept / norms

    def rule(g):
        g = np.where(mask, g, 0).reshape(rows, blocks, n)
        projected = g - y * (y * g).sum(axis=-1, keepdims=True)
        return ((projected / norms).reshape(rows, width),)

    return tape.record(y.reshape(rows, width), (h,), rule, 'sparsify')


def sparsify(h, k):
    """Sparse code of a single raw gate vector."""
    h = np.asarray(h, dtype=np.float64).reshape(1, -1)
    alpha = sparsify_tensor(Tape(), h, k).data[0]
    support = np.flatnonzero(alpha)
    return SparseCode(zip(support, alpha[support]), k, h.shape[1])


def codes_to_dense(codes, n):
    """Stack a batch of SparseCode (or dense rows) into an [I × n] array."""
    rows = [code.dense(n) if isinstance(code, SparseCode) else np.asarray(code, dtype=np.float64) for code in codes]
    if not rows:
        raise ValueError('Empty batch of codes.')
    dense = np.vstack(rows)
    if dense.shape[1] != n:
        raise DimensionError('Codes have {} entries but the dictionary has {}'.format(dense.shape[1], n))
    return dense


def cv_penalty_tensor(tape, codes, blocks=1, absolute=False):
    """Var(a) / (mean(a)^2 + eps) of the batch-summed codes, averaged over patch blocks."""
    codes = tape._lift(codes)
    if codes.ndim != 2 or codes.shape[0] == 0:
        raise ValueError('cv_penalty needs a non-empty [I × n] batch, got {}'.format(codes.shape))

    rows, width = codes.shape
    if absolute:
        codes = tape.abs(codes)
    total = tape.sum(tape.reshape(codes, (rows, blocks, width // blocks)), axis=0)
    mean = tape.mean(total, axis=1, keepdims=True)
    variance = tape.mean(tape.square(tape.sub(total, mean)), axis=1, keepdims=True)
    ratio = tape.div(variance, tape.add(tape.square(mean), CV_EPSILON))
    return tape.mean(ratio)


def cv_penalty(codes, n, absolute=False):
    """Coefficient-of-variation balance penalty over a batch of codes."""
    return float(cv_penalty_tensor(Tape(), codes_to_dense(codes, n), absolute=absolute).data)


def l1_penalty_tensor(tape, gates):
    return tape.sum(tape.abs(gates))


def l1_penalty(gates):
    if isinstance(gates, Tensor):
        return float(np.abs(gates.data).sum())

    total = 0.0
    for row in gates:
        total += np.abs(row.weights if isinstance(row, SparseCode) else np.asarray(row, dtype=np.float64)).sum()
    return float(total)

#   Neural Implicit Dictionary
#      Released under the MIT license
#

import enum

import numpy as np

from DiffKernel.Tape import Tape
from DiffKernel.Tensor import DimensionError

from .Sparse import sparsify_tensor


class GatingMode(enum.Enum):
    DENSE_L1 = 'dense-l1'
    HARD_TOP_K = 'hard-top-k'


def gating_mode(epoch, warmup_epochs):
    if epoch < 0:
        raise ValueError('Epoch must be non-negative, got {}'.format(epoch))
    return GatingMode.DENSE_L1 if epoch < warmup_epochs else GatingMode.HARD_TOP_K


class GateTable(object):
    """One trainable raw-gate row per training instance."""

    kind = 'table'

    def __init__(self, store, prefix='gate'):
        self.store = store
        self.prefix = prefix

    @classmethod
    def create(cls, store, instances, width, n=None, rng=None, prefix='gate'):
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = np.sqrt(1.0 / (n if n is not None else width))
        store.add(prefix + '/table', rng.normal(0.0, scale, size=(instances, width)))
        return cls(store, prefix=prefix)

    @property
    def rows(self):
        return self.store[self.prefix + '/table']

    @property
    def instances(self):
        return self.rows.shape[0]

    @property
    def width(self):
        return self.rows.shape[1]

    @property
    def shape_header(self):
        return self.instances, 0

    def names(self):
        return [self.prefix + '/table']

    def mean_row(self):
        return self.rows.mean(axis=0)

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.intp).reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.instances):
            raise IndexError('Instance ids {} out of range for a table of {} rows'.format(ids.tolist(), self.instances))
        return ids

    def __call__(self, tape, ids):
        ids = self._check_ids(ids)
        return tape.take(tape.param(self.store, self.prefix + '/table'), ids, axis=0)


class EncoderGate(object):
    """Small feed-forward network from an observation summary vector to raw gates.

    With hidden_width 0 the encoder is a single affine layer.
    """

    kind = 'encoder'

    def __init__(self, store, prefix='encoder'):
        self.store = store
        self.prefix = prefix

    @classmethod
    def create(cls, store, summary_dim, hidden_width, width, n=None, rng=None, prefix='encoder'):
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = np.sqrt(1.0 / (n if n is not None else width))

        fan_in = summary_dim
        if hidden_width:
            bound = np.sqrt(6.0 / fan_in)
            store.add(prefix + '/hidden/W', rng.uniform(-bound, bound, size=(fan_in, hidden_width)))
            store.add(prefix + '/hidden/b', np.zeros(hidden_width))
            fan_in = hidden_width
        store.add(prefix + '/out/W', rng.normal(0.0, scale / np.sqrt(fan_in), size=(fan_in, width)))
        store.add(prefix + '/out/b', rng.normal(0.0, scale, size=width))
        return cls(store, prefix=prefix)

    @property
    def has_hidden(self):
        return self.prefix + '/hidden/W' in self.store

    @property
    def summary_dim(self):
        name = '/hidden/W' if self.has_hidden else '/out/W'
        return self.store[self.prefix + name].shape[0]

    @property
    def hidden_width(self):
        return self.store[self.prefix + '/hidden/W'].shape[1] if self.has_hidden else 0

    @property
    def width(self):
        return self.store[self.prefix + '/out/W'].shape[1]

    @property
    def shape_header(self):
        return self.summary_dim, self.hidden_width

    def names(self):
        layers = ('hidden', 'out') if self.has_hidden else ('out',)
        return ['{}/{}/{}'.format(self.prefix, layer, p) for layer in layers for p in ('W', 'b')]

    def __call__(self, tape, summaries):
        summaries = np.atleast_2d(summaries)
        if summaries.shape[1] != self.summary_dim:
            raise DimensionError('Encoder expects summaries of size {}, got {}'.format(self.summary_dim, summaries.shape[1]))

        h = summaries
        if self.has_hidden:
            W = tape.param(self.store, self.prefix + '/hidden/W')
            b = tape.param(self.store, self.prefix + '/hidden/b')
            h = tape.relu(tape.affine(h, W, b))
        W = tape.param(self.store, self.prefix + '/out/W')
        b = tape.param(self.store, self.prefix + '/out/b')
        return tape.affine(h, W, b)


def raw_gates(gate, instance):
    """Raw gate vector for one instance: a table row id or an encoder summary vector."""
    tape = Tape(dtype=gate.store.dtype)
    if isinstance(gate, GateTable):
        return gate(tape, [instance]).data[0]
    return gate(tape, np.asarray(instance, dtype=np.float64).reshape(1, -1)).data[0]


def gate_codes(tape, gate, inputs, k, mode, blocks=1, noise=0.0, rng=None):
    """Raw gates for a batch and the codes the current gating mode combines with.

    Returns (raw, codes). In DENSE_L1 mode the codes are the raw gates.
    """
    raw = gate(tape, inputs)
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        raw = tape.add(raw, rng.normal(0.0, noise, size=raw.shape))
    if mode is GatingMode.DENSE_L1:
        return raw, raw
    return raw, sparsify_tensor(tape, raw, k, blocks=blocks)


def observation_summary(omega, values, cells, channels=None):
    """Fixed-length summary of an observation: mean value per cell of a regular grid over [-1,1]^p.

    Empty cells summarise to zero. Output size is cells^p · C.
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64).reshape(omega.shape[0], -1)
    channels = channels if channels is not None else values.shape[1]

    bins = np.clip(np.floor((omega + 1.0) / 2.0 * cells).astype(np.intp), 0, cells - 1)
    flat = np.ravel_multi_index(bins.T, (cells,) * omega.shape[1])
    size = cells ** omega.shape[1]

    sums = np.zeros((size, channels))
    np.add.at(sums, flat, values)
    counts = np.bincount(flat, minlength=size)[:, None]
    return (sums / np.maximum(counts, 1)).reshape(-1)

#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from DiffKernel.Tape import Tape
from DiffKernel.Tensor import DimensionError

from .Embedding import uniform_init


ACTIVATIONS = ('sine', 'relu')


def activate(tape, x, activation):
    if activation == 'sine':
        return tape.sine(x, 1.0)
    return tape.relu(x)


class Trunk(object):
    """Positional embedding followed by hidden affine+activation layers shared by every expert."""

    def __init__(self, store, embedding, layers, activation='sine', prefix='trunk'):
        if activation not in ACTIVATIONS:
            raise ValueError('Unknown activation "{}"'.format(activation))

        self.store = store
        self.embedding = embedding
        self.layers = layers
        self.activation = activation
        self.prefix = prefix
        self.evaluations = 0

    @classmethod
    def create(cls, store, embedding, width, layers, activation='sine', rng=None, prefix='trunk'):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = embedding.n_freq
        for i in range(layers):
            store.add('{}/{}/W'.format(prefix, i), uniform_init(rng, fan_in, width, np.sqrt(6.0 / fan_in)))
            store.add('{}/{}/b'.format(prefix, i), rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=width))
            fan_in = width
        return cls(store, embedding, layers, activation=activation, prefix=prefix)

    @property
    def width(self):
        if self.layers == 0:
            return self.embedding.n_freq
        return self.store['{}/{}/W'.format(self.prefix, self.layers - 1)].shape[1]

    def names(self):
        names = [self.embedding.prefix + '/W', self.embedding.prefix + '/b']
        for i in range(self.layers):
            names += ['{}/{}/W'.format(self.prefix, i), '{}/{}/b'.format(self.prefix, i)]
        return names

    def __call__(self, tape, x):
        self.evaluations += 1
        h = self.embedding(tape, x)
        for i in range(self.layers):
            W = tape.param(self.store, '{}/{}/W'.format(self.prefix, i))
            b = tape.param(self.store, '{}/{}/b'.format(self.prefix, i))
            h = activate(tape, tape.affine(h, W, b), self.activation)
        return h


class ExpertHead(object):
    """Read-only view of one expert's two private layers."""

    def __init__(self, heads, index):
        self.heads = heads
        self.index = index

    def _slice(self, name):
        return self.heads.store['{}/{}'.format(self.heads.prefix, name)][self.index]

    @property
    def W1(self):
        return self._slice('W1')

    @property
    def b1(self):
        return self._slice('b1')

    @property
    def W2(self):
        return self._slice('W2')

    @property
    def b2(self):
        return self._slice('b2')


class ExpertHeads(object):
    """All expert heads, stored as stacked [n × ...] blocks so a subset evaluates in one pass."""

    def __init__(self, store, activation='sine', prefix='heads'):
        if activation not in ACTIVATIONS:
            raise ValueError('Unknown activation "{}"'.format(activation))

        self.store = store
        self.activation = activation
        self.prefix = prefix
        self.evaluations = 0

    @classmethod
    def create(cls, store, n, in_width, head_width, channels, activation='sine', rng=None, prefix='heads'):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound1 = np.sqrt(6.0 / in_width)
        bound2 = np.sqrt(6.0 / head_width)
        store.add(prefix + '/W1', rng.uniform(-bound1, bound1, size=(n, in_width, head_width)))
        store.add(prefix + '/b1', rng.uniform(-1.0 / np.sqrt(in_width), 1.0 / np.sqrt(in_width), size=(n, head_width)))
        store.add(prefix + '/W2', rng.uniform(-bound2, bound2, size=(n, head_width, channels)))
        store.add(prefix + '/b2', np.zeros((n, channels)))
        return cls(store, activation=activation, prefix=prefix)

    def __len__(self):
        return self.store[self.prefix + '/W1'].shape[0]

    def __getitem__(self, index):
        if not 0 <= index < len(self):
            raise IndexError('Expert index {} out of range for {} experts'.format(index, len(self)))
        return ExpertHead(self, index)

    @property
    def in_width(self):
        return self.store[self.prefix + '/W1'].shape[1]

    @property
    def head_width(self):
        return self.store[self.prefix + '/W1'].shape[2]

    @property
    def channels(self):
        return self.store[self.prefix + '/W2'].shape[2]

    def names(self):
        return [self.prefix + '/' + name for name in ('W1', 'b1', 'W2', 'b2')]

    def __call__(self, tape, features, expert_ids):
        expert_ids = np.asarray(expert_ids, dtype=np.intp).reshape(-1)
        n = len(self)
        if expert_ids.size and (expert_ids.min() < 0 or expert_ids.max() >= n):
            raise IndexError('Expert ids {} out of range for {} experts'.format(expert_ids.tolist(), n))
        if features.shape[-1] != self.in_width:
            raise DimensionError('Heads expect {} trunk features, got {}'.format(self.in_width, features.shape[-1]))

        self.evaluations += expert_ids.size
        W1 = tape.take(tape.param(self.store, self.prefix + '/W1'), expert_ids, axis=0)
        b1 = tape.take(tape.param(self.store, self.prefix + '/b1'), expert_ids, axis=0)
        W2 = tape.take(tape.param(self.store, self.prefix + '/W2'), expert_ids, axis=0)
        b2 = tape.take(tape.param(self.store, self.prefix + '/b2'), expert_ids, axis=0)

        hidden = activate(tape, tape.expert_affine(features, W1, b1), self.activation)
        return tape.expert_affine(hidden, W2, b2)


def eval_basis(trunk, heads, expert_ids, x, dtype=np.float64):
    """Basis values b_j(x) for the requested experts: [B × |ids| × C]."""
    tape = Tape(dtype=dtype)
    features = trunk(tape, np.atleast_2d(np.asarray(x, dtype=dtype)))
    return heads(tape, features, expert_ids).data

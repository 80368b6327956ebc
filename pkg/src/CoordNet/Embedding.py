#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from DiffKernel.Tape import Tape
from DiffKernel.Tensor import ParamStore, DimensionError


def uniform_init(rng, fan_in, fan_out, bound, dtype=np.float64):
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def init_network(dims, omega0=30.0, seed=0, dtype=np.float64, prefix='layer'):
    """Initialise a sine network with layer sizes `dims`.

    The first layer is a frequency layer evaluated as sin(omega0 * (Wx + b)),
    so its weights are drawn in ±1/fan_in and omega0 supplies the scale.
    Later layers draw weights in ±sqrt(6/fan_in).
    """
    if len(dims) < 2 or any(int(d) <= 0 for d in dims):
        raise ValueError('init_network: dims must be at least two positive sizes, got {}'.format(dims))

    rng = np.random.default_rng(seed)
    store = ParamStore(dtype)
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in)
        store.add('{}/{}/W'.format(prefix, i), uniform_init(rng, fan_in, fan_out, bound, dtype))
        store.add('{}/{}/b'.format(prefix, i), rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=fan_out))
    return store


class PositionalEmbedding(object):
    """gamma(x)_i = sin(omega0 * (w_i^T x + b_i)).

    W is stored input-major as [m × n_freq] so it feeds `affine` directly;
    `frequencies` gives the row-per-frequency view.
    """

    def __init__(self, store, omega0=30.0, prefix='embed'):
        self.store = store
        self.omega0 = omega0
        self.prefix = prefix

        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise DimensionError('PositionalEmbedding: W is {} but b is {}'.format(self.W.shape, self.b.shape))
        if self.W.shape[1] < 1:
            raise ValueError('PositionalEmbedding needs at least one frequency.')

    @classmethod
    def create(cls, store, m, n_freq, omega0=30.0, rng=None, prefix='embed'):
        rng = rng if rng is not None else np.random.default_rng(0)
        store.add(prefix + '/W', uniform_init(rng, m, n_freq, 1.0 / m))
        store.add(prefix + '/b', rng.uniform(-1.0 / np.sqrt(m), 1.0 / np.sqrt(m), size=n_freq))
        return cls(store, omega0=omega0, prefix=prefix)

    @property
    def W(self):
        return self.store[self.prefix + '/W']

    @property
    def b(self):
        return self.store[self.prefix + '/b']

    @property
    def frequencies(self):
        return self.W.T

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def n_freq(self):
        return self.W.shape[1]

    def __call__(self, tape, x):
        W = tape.param(self.store, self.prefix + '/W')
        b = tape.param(self.store, self.prefix + '/b')
        return tape.sine(tape.affine(x, W, b), self.omega0)


def embed(x, pe):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != pe.m:
        raise DimensionError('embed: x has {} columns but the embedding expects {}'.format(x.shape[1], pe.m))
    return pe(Tape(), x).data


class TwoLayerSiren(object):
    """f(x) = alpha^T gamma(x) + c."""

    def __init__(self, embedding, prefix='siren'):
        self.embedding = embedding
        self.store = embedding.store
        self.prefix = prefix

    @classmethod
    def create(cls, m, n_freq, omega0=30.0, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        store = ParamStore(dtype)
        embedding = PositionalEmbedding.create(store, m, n_freq, omega0=omega0, rng=rng)
        store.add('siren/alpha', rng.uniform(-np.sqrt(6.0 / n_freq), np.sqrt(6.0 / n_freq), size=n_freq))
        store.add('siren/c', np.zeros(1))
        return cls(embedding)

    @property
    def alpha(self):
        return self.store[self.prefix + '/alpha']

    @property
    def c(self):
        return float(self.store[self.prefix + '/c'][0])

    def __call__(self, tape, x):
        features = self.embedding(tape, x)
        alpha = tape.reshape(tape.param(self.store, self.prefix + '/alpha'), (-1, 1))
        out = tape.affine(features, alpha, tape.param(self.store, self.prefix + '/c'))
        return tape.reshape(out, (-1,))


def eval_two_layer(model, x):
    return model(Tape(), np.atleast_2d(np.asarray(x, dtype=np.float64))).data

#   Neural Implicit Dictionary
#      Released under the MIT license
#

import logging

import numpy as np

from DiffKernel.Optim import AdamState, adam_step, cosine_lr
from DiffKernel.Tape import Tape, backward
from DiffKernel.Tensor import ParamStore, NonFiniteError
from Measurements.Functionals import PixelFunctional, weighted_loss
from Measurements.MeasurementSet import normalized_time
from NidLayer.Dictionary import Dictionary
from NidLayer.Gating import EncoderGate
from NidLayer.Patches import PatchGrid

from .Adaptation import adapt_code
from .Trainer import TrainingDivergedError


def inpaint(model, corrupted, cfg):
    """Robust (l1) code fit from a random start; the corruption mask is never consulted."""
    code, field = adapt_code(model, corrupted, cfg.adapt_steps, loss='l1', cfg=cfg, init='random')
    return field, code


def ct_reconstruct(model, sinogram, cfg, instance=None):
    """Least-squares code fit to ray integrals.

    Table-gated models start from the instance's row when it is a training
    phantom and from the mean row otherwise.
    """
    if len(sinogram) == 0:
        raise ValueError('CT reconstruction needs at least one view.')
    if sinogram.kind != 'radon':
        raise ValueError('CT reconstruction expects ray measurements, got "{}"'.format(sinogram.kind))

    if isinstance(model.gate, EncoderGate):
        init = 'gate'
    else:
        init = 'gate' if instance is not None else 'mean'
    _, field = adapt_code(model, sinogram, cfg.adapt_steps, loss='l2', cfg=cfg, init=init, instance=instance)
    return field


def sdf_fit(model, samples, cfg):
    """Code fit to labelled SDF samples under the on/off-surface l1 objective."""
    _, field = adapt_code(model, samples, cfg.adapt_steps, loss='l1', cfg=cfg)
    return field


def zero_level_points(field, resolution=128, h=1e-4):
    """Points where a 2D field crosses zero on a regular grid, with unit normals.

    Crossings are linearly interpolated along grid edges; normals are
    normalised central-difference gradients at the crossings (one-sided
    at the domain border).
    """
    axis = np.linspace(-1.0, 1.0, resolution)
    gx, gy = np.meshgrid(axis, axis)
    grid = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    values = np.asarray(field(grid), dtype=np.float64)[:, 0].reshape(resolution, resolution)

    nodes = grid.reshape(resolution, resolution, 2)
    edges = ((values[:, :-1], values[:, 1:], nodes[:, :-1], nodes[:, 1:]),
             (values[:-1, :], values[1:, :], nodes[:-1, :], nodes[1:, :]))

    points = []
    for a, b, pa, pb in edges:
        crossing = (a == 0) | (np.sign(a) * np.sign(b) < 0)
        denominator = np.where(a - b == 0, 1.0, a - b)
        t = np.where(a - b == 0, 0.0, a / denominator)[crossing]
        points.append(pa[crossing] + t[:, None] * (pb[crossing] - pa[crossing]))

    points = np.concatenate(points, axis=0)
    if not len(points):
        return points, points

    gradient = []
    for d in np.eye(2) * h:
        upper = np.clip(points + d, -1.0, 1.0)
        lower = np.clip(points - d, -1.0, 1.0)
        span = (upper - lower) @ (d / h)
        gradient.append((np.asarray(field(upper))[:, 0] - np.asarray(field(lower))[:, 0]) / span)
    gradient = np.stack(gradient, axis=1)
    lengths = np.linalg.norm(gradient, axis=1)
    keep = lengths > 0
    return points[keep], gradient[keep] / lengths[keep, None]


class TemporalCodeNet(object):
    """alpha(t): normalised time to n code weights through one ReLU hidden layer.

    The output bias starts at e_0 so the first atom carries the clip at initialisation.
    """

    def __init__(self, store, prefix='temporal'):
        self.store = store
        self.prefix = prefix

    @classmethod
    def create(cls, store, n, hidden=32, rng=None, prefix='temporal'):
        rng = rng if rng is not None else np.random.default_rng(0)
        store.add(prefix + '/hidden/W', rng.uniform(-1.0, 1.0, size=(1, hidden)))
        store.add(prefix + '/hidden/b', rng.uniform(-1.0, 1.0, size=hidden))
        store.add(prefix + '/out/W', rng.normal(0.0, 0.01, size=(hidden, n)))
        bias = np.zeros(n)
        bias[0] = 1.0
        store.add(prefix + '/out/b', bias)
        return cls(store, prefix=prefix)

    @property
    def n(self):
        return self.store[self.prefix + '/out/b'].shape[0]

    def names(self):
        return ['{}/{}/{}'.format(self.prefix, layer, p) for layer in ('hidden', 'out') for p in ('W', 'b')]

    def __call__(self, tape, times):
        times = np.asarray(times, dtype=np.float64).reshape(-1, 1)
        W = tape.param(self.store, self.prefix + '/hidden/W')
        b = tape.param(self.store, self.prefix + '/hidden/b')
        hidden = tape.relu(tape.affine(times, W, b))
        W = tape.param(self.store, self.prefix + '/out/W')
        b = tape.param(self.store, self.prefix + '/out/b')
        return tape.affine(hidden, W, b)

    def codes(self, times):
        return self(Tape(dtype=self.store.dtype), times).data.astype(np.float64)


def penalty_weights(n, beta):
    return np.exp(beta * np.arange(n))


def video_penalty_tensor(tape, alpha, beta):
    """sum_t sum_i |alpha_i(t)| exp(beta·i) / T with 0-based expert index i."""
    frames, n = alpha.shape
    return tape.mul(tape.sum(tape.mul(tape.abs(alpha), penalty_weights(n, beta))), 1.0 / frames)


def video_penalty(alpha, beta):
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    return float(video_penalty_tensor(Tape(), alpha, beta).data)


class VideoDecomposition(object):
    """Low-rank background f_X = sum_i alpha_i(t) b_i(x) and the residual f_E = frame - f_X."""

    def __init__(self, dictionary, codenet, frames, losses):
        self.dictionary = dictionary
        self.codenet = codenet
        self.frames = frames
        self.losses = losses

    @property
    def times(self):
        return np.array([normalized_time(t, len(self.frames)) for t in range(len(self.frames))])

    def background(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        alpha = self.codenet.codes([normalized_time(t, len(self.frames))])
        tape = Tape(dtype=self.dictionary.store.dtype)
        return self.dictionary.evaluate(tape, x, alpha).data[0].astype(np.float64)

    def backgrounds(self):
        """f_X on every frame's pixels: [T × B × C]."""
        alpha = self.codenet.codes(self.times)
        tape = Tape(dtype=self.dictionary.store.dtype)
        return self.dictionary.evaluate(tape, self.frames[0].omega, alpha).data.astype(np.float64)

    def residuals(self):
        values = np.stack([frame.values for frame in self.frames])
        return values - self.backgrounds()


def video_decompose(frames, cfg):
    """Jointly train a dictionary and TemporalCodeNet under l1 data loss + exponentially weighted code penalty.

    Both use Adam at `lr_video`, cosine-annealed over `video_epochs`; the
    penalty is weighted by `video_lam`.
    """
    if len(frames) < 2:
        raise ValueError('Video decomposition needs at least 2 frames, got {}'.format(len(frames)))
    if any(not np.array_equal(frame.omega, frames[0].omega) for frame in frames):
        raise ValueError('Every frame must be sampled on the same pixel grid.')

    channels = frames[0].channels
    store = ParamStore(cfg.dtype)
    dictionary = Dictionary.create(cfg.n_experts, 2, channels, n_freq=cfg.n_freq, trunk_width=cfg.trunk_width,
                                   trunk_layers=cfg.trunk_layers, head_width=cfg.head_width, omega0=cfg.omega0,
                                   activation=cfg.activation, grid=PatchGrid([1, 1]), seed=cfg.seed, store=store)
    codenet = TemporalCodeNet.create(store, cfg.n_experts, hidden=cfg.video_hidden, rng=np.random.default_rng(cfg.seed + 4))

    state = AdamState(dictionary.names() + codenet.names(), lr=cfg.lr_video)
    functional = PixelFunctional()
    times = np.array([normalized_time(t, len(frames)) for t in range(len(frames))])
    targets = np.stack([frame.values for frame in frames])
    weights = np.stack([functional.weights(frame) for frame in frames])

    logging.info('Decomposing a {}-frame video with {} experts (beta={}, {} epochs).'.format(
        len(frames), cfg.n_experts, cfg.beta, cfg.video_epochs))

    losses = []
    for epoch in range(cfg.video_epochs):
        try:
            tape = Tape(dtype=store.dtype)
            alpha = codenet(tape, times)
            prediction = dictionary.evaluate(tape, frames[0].omega, alpha)
            data = weighted_loss(tape, prediction, targets, weights, 'l1')
            objective = tape.add(data, tape.mul(video_penalty_tensor(tape, alpha, cfg.beta), cfg.video_lam))
            backward(tape, objective)
        except NonFiniteError as e:
            raise TrainingDivergedError('Video decomposition diverged in epoch {} ({})'.format(epoch, e), epoch - 1 if epoch else None) from e

        state.lr = cosine_lr(cfg.lr_video, epoch, cfg.video_epochs)
        adam_step(store, state)
        losses.append(float(objective.data))
        logging.debug('Video epoch {}/{}: data {:.6g}, objective {:.6g}'.format(epoch + 1, cfg.video_epochs, float(data.data), losses[-1]))

    logging.info('Video decomposition finished: objective {:.6g}'.format(losses[-1] if losses else float('nan')))
    return VideoDecomposition(dictionary, codenet, frames, losses)

#   Neural Implicit Dictionary
#      Released under the MIT license
#

import logging

import numpy as np

from DiffKernel.Optim import make_optimizer, optimizer_step
from DiffKernel.Tape import Tape
from Measurements.Functionals import functional_for
from NidLayer.Dictionary import Dictionary
from NidLayer.Patches import PatchGrid

from .Trainer import chunked_data_term


ONE = np.ones((1, 1))


class BaselineField(object):
    """A per-scene network fitted from scratch: a one-atom dictionary with a fixed unit code."""

    def __init__(self, network, losses):
        self.network = network
        self.losses = losses

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        tape = Tape(dtype=self.network.store.dtype)
        return self.network.evaluate(tape, x, ONE).data[0].astype(np.float64)

    def parameter_count(self):
        return self.network.parameter_count()


def baseline_fit(obs, cfg, steps, loss='l2', optimizer='adam', seed=None):
    """Train a single coordinate network on one instance; losses[i] is the loss before step i.

    Every step is full batch; large measurement sets are evaluated in point
    chunks whose gradients add up before the optimizer step.
    """
    functional = functional_for(obs.kind, cfg.quadrature)
    m = 2 if obs.kind == 'radon' else obs.omega.shape[1]
    network = Dictionary.create(1, m, obs.channels, n_freq=cfg.n_freq, trunk_width=cfg.trunk_width,
                                trunk_layers=cfg.trunk_layers, head_width=cfg.head_width, omega0=cfg.omega0,
                                activation=cfg.activation, grid=PatchGrid([1] * m),
                                seed=cfg.seed if seed is None else seed, dtype=cfg.dtype)
    state = make_optimizer(optimizer, network.names(), cfg.lr_baseline)

    losses = []
    for _ in range(steps):
        losses.append(chunked_data_term(network, functional, obs, ONE, loss))
        optimizer_step(network.store, state)

    if steps:
        losses.append(chunked_data_term(network, functional, obs, ONE, loss, backpropagate=False))
        logging.info('Baseline for instance {} after {} steps: {} loss {:.6g}'.format(obs.instance_id, steps, loss, losses[-1]))

    return BaselineField(network, losses)

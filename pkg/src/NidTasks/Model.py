#   Neural Implicit Dictionary
#      Released under the MIT license
#

import numpy as np

from DiffKernel.Tensor import ParamStore
from NidLayer.Dictionary import Dictionary
from NidLayer.Gating import GateTable, EncoderGate
from NidLayer.Patches import PatchGrid

from .TaskConfig import ConfigError


class ArchSpec(object):
    """Dictionary dimensions, as written into checkpoint headers."""

    FIELDS = ('n', 'm', 'channels', 'n_freq', 'trunk_width', 'trunk_layers', 'head_width',
              'activation', 'omega0', 'patch_counts', 'overlap')

    def __init__(self, n, m, channels, n_freq=64, trunk_width=64, trunk_layers=2, head_width=32,
                 activation='sine', omega0=30.0, patch_counts=None, overlap=0.0):
        self.n = int(n)
        self.m = int(m)
        self.channels = int(channels)
        self.n_freq = int(n_freq)
        self.trunk_width = int(trunk_width)
        self.trunk_layers = int(trunk_layers)
        self.head_width = int(head_width)
        self.activation = activation
        self.omega0 = float(omega0)
        self.patch_counts = [int(c) for c in (patch_counts if patch_counts is not None else [1] * self.m)]
        self.overlap = float(overlap)

        if len(self.patch_counts) != self.m:
            raise ConfigError('patch_grid has {} axes but the signal is {}-D'.format(len(self.patch_counts), self.m))

    @classmethod
    def from_config(cls, cfg, m, channels):
        counts = list(cfg.patch_grid)
        if len(counts) == 1:
            counts = counts * m
        return cls(cfg.n_experts, m, channels, n_freq=cfg.n_freq, trunk_width=cfg.trunk_width,
                   trunk_layers=cfg.trunk_layers, head_width=cfg.head_width, activation=cfg.activation,
                   omega0=cfg.omega0, patch_counts=counts, overlap=cfg.patch_overlap)

    def __eq__(self, other):
        return isinstance(other, ArchSpec) and all(getattr(self, f) == getattr(other, f) for f in self.FIELDS)

    def __repr__(self):
        return 'ArchSpec({})'.format(', '.join('{}={}'.format(f, getattr(self, f)) for f in self.FIELDS))

    @property
    def grid(self):
        return PatchGrid(self.patch_counts, self.overlap)


class TrainingLog(object):
    """Per-epoch training record."""

    def __init__(self):
        self.epochs = []

    def __len__(self):
        return len(self.epochs)

    def append(self, epoch, mode, data_loss, penalty, utilization):
        self.epochs.append({
            'epoch': epoch,
            'mode': mode,
            'data_loss': float(data_loss),
            'penalty': float(penalty),
            'utilization': np.asarray(utilization, dtype=np.float64),
        })

    @property
    def losses(self):
        return [entry['data_loss'] + entry['penalty'] for entry in self.epochs]

    @property
    def data_losses(self):
        return [entry['data_loss'] for entry in self.epochs]

    def last_finite_epoch(self):
        for entry in reversed(self.epochs):
            if np.isfinite(entry['data_loss']) and np.isfinite(entry['penalty']):
                return entry['epoch']
        return None


class TrainedModel(object):
    """A dictionary, its gate, and the log of the run that produced them."""

    def __init__(self, store, dictionary, gate, arch, k, log=None):
        self.store = store
        self.dictionary = dictionary
        self.gate = gate
        self.arch = arch
        self.k = int(k)
        self.log = log if log is not None else TrainingLog()

    @property
    def gating(self):
        return self.gate.kind

    def parameter_count(self):
        return self.dictionary.parameter_count() + self.store.count(self.gate.prefix)

    def gate_names(self):
        return self.gate.names()

    def summary_cells(self):
        if not isinstance(self.gate, EncoderGate):
            return None
        per_channel = self.gate.summary_dim // self.arch.channels
        return int(round(per_channel ** (1.0 / self.arch.m)))


def build_model(cfg, m, channels, instances, seed=None, dtype=None):
    """Fresh dictionary and gate for a corpus of `instances` signals with m-D inputs and C channels."""
    arch = ArchSpec.from_config(cfg, m, channels)
    seed = cfg.seed if seed is None else seed
    store = ParamStore(dtype if dtype is not None else cfg.dtype)

    dictionary = Dictionary.create(arch.n, arch.m, arch.channels, n_freq=arch.n_freq, trunk_width=arch.trunk_width,
                                   trunk_layers=arch.trunk_layers, head_width=arch.head_width, omega0=arch.omega0,
                                   activation=arch.activation, grid=arch.grid, seed=seed, store=store)

    rng = np.random.default_rng(seed + 1)
    width = dictionary.code_width
    if cfg.gating == 'table':
        gate = GateTable.create(store, instances, width, n=arch.n, rng=rng)
    else:
        summary_dim = cfg.summary_cells ** m * channels
        gate = EncoderGate.create(store, summary_dim, cfg.encoder_hidden, width, n=arch.n, rng=rng)

    return TrainedModel(store, dictionary, gate, arch, cfg.k)


def attach_model(store, arch, gate_kind, k):
    """TrainedModel views over a populated store (the inverse of the checkpoint writer)."""
    dictionary = Dictionary.attach(store, arch.m, arch.trunk_layers, arch.activation, arch.grid, arch.omega0)
    gate = GateTable(store) if gate_kind == 'table' else EncoderGate(store)
    return TrainedModel(store, dictionary, gate, arch, k)

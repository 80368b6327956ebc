#   Neural Implicit Dictionary
#      Released under the MIT license
#

import dataclasses

import numpy as np


class ConfigError(ValueError):
    pass


GATING_KINDS = ('table', 'encoder')
ACTIVATIONS = ('sine', 'relu')
LOSSES = ('l1', 'l2')
ADAPT_OPTIMIZERS = ('htp', 'iht', 'adam', 'sgd')
PRECISIONS = {'float32': np.float32, 'float64': np.float64}


@dataclasses.dataclass
class TaskConfig:
    """Training and adaptation hyperparameters shared by every pipeline."""

    # Dictionary and gating
    n_experts: int = 64
    k: int = 8
    gating: str = 'table'
    encoder_hidden: int = 64
    summary_cells: int = 8
    gate_noise: float = 0.0
    patch_grid: list = dataclasses.field(default_factory=lambda: [1, 1])
    patch_overlap: float = 0.0

    # Architecture
    n_freq: int = 64
    trunk_width: int = 64
    trunk_layers: int = 2
    head_width: int = 32
    omega0: float = 30.0
    activation: str = 'sine'

    # Objective
    warmup_epochs: int = 10
    lam: float = 0.01
    l1_scale: float = 1.0
    cv_scale: float = 1.0
    cv_abs: bool = True
    beta: float = 0.5
    loss: str = 'l2'

    # Optimisation
    lr_dict: float = 1e-3
    lr_code: float = 1e-2
    lr_adapt: float = 1e-2
    lr_baseline: float = 1e-3
    epochs: int = 50
    batch_size: int = 8
    points_per_step: int = 1024
    adapt_steps: int = 200
    adapt_optimizer: str = 'htp'
    code_init_noise: float = 1e-3

    # Measurements
    quadrature: int = 256
    ray_count: int = 64

    # Video
    video_hidden: int = 32
    video_epochs: int = 1500
    video_lam: float = 0.1
    lr_video: float = 5e-3

    # Runtime
    seed: int = 0
    precision: str = 'float32'
    threads: int = 4

    def __post_init__(self):
        self.validate()

    @classmethod
    def keys(cls):
        return [field.name for field in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping):
        unknown = sorted(set(mapping) - set(cls.keys()))
        if unknown:
            raise ConfigError('Unknown config key "{}"'.format(unknown[0]))

        try:
            return cls(**dict(mapping))
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def replace(self, **changes):
        return self.from_mapping(dict(self.to_dict(), **changes))

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def validate(self):
        if self.n_experts < 1:
            raise ConfigError('n_experts must be at least 1, got {}'.format(self.n_experts))
        if not 1 <= self.k <= self.n_experts:
            raise ConfigError('k must satisfy 1 <= k <= n_experts ({}), got {}'.format(self.n_experts, self.k))
        if self.lam < 0:
            raise ConfigError('lam must be non-negative, got {}'.format(self.lam))
        if not self.beta > 0:
            raise ConfigError('beta must be positive, got {}'.format(self.beta))
        if self.warmup_epochs < 0:
            raise ConfigError('warmup_epochs must be non-negative, got {}'.format(self.warmup_epochs))
        if self.quadrature < 2:
            raise ConfigError('quadrature must be at least 2, got {}'.format(self.quadrature))
        if not 0.0 <= self.patch_overlap < 0.5:
            raise ConfigError('patch_overlap must lie in [0, 0.5), got {}'.format(self.patch_overlap))
        if self.gate_noise < 0:
            raise ConfigError('gate_noise must be non-negative, got {}'.format(self.gate_noise))
        if self.video_lam < 0:
            raise ConfigError('video_lam must be non-negative, got {}'.format(self.video_lam))
        for name in ('lr_dict', 'lr_code', 'lr_adapt', 'lr_baseline', 'lr_video'):
            if not getattr(self, name) > 0:
                raise ConfigError('{} must be positive, got {}'.format(name, getattr(self, name)))

        for name, value, allowed in (('gating', self.gating, GATING_KINDS),
                                     ('activation', self.activation, ACTIVATIONS),
                                     ('loss', self.loss, LOSSES),
                                     ('adapt_optimizer', self.adapt_optimizer, ADAPT_OPTIMIZERS),
                                     ('precision', self.precision, tuple(PRECISIONS))):
            if value not in allowed:
                raise ConfigError('{} must be one of {}, got "{}"'.format(name, list(allowed), value))

        for name in ('epochs', 'adapt_steps', 'points_per_step', 'trunk_layers', 'encoder_hidden', 'video_epochs'):
            if getattr(self, name) < 0:
                raise ConfigError('{} must be non-negative, got {}'.format(name, getattr(self, name)))
        for name in ('n_freq', 'trunk_width', 'head_width', 'summary_cells', 'ray_count', 'video_hidden', 'threads'):
            if getattr(self, name) < 1:
                raise ConfigError('{} must be positive, got {}'.format(name, getattr(self, name)))
        if self.batch_size < 1:
            raise ConfigError('batch_size must be positive, got {}'.format(self.batch_size))

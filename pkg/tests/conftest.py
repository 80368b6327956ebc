"""Shared fixtures: tiny configurations and models that keep the unit tests fast."""

import numpy as np
import pytest

from NidTasks.Model import build_model
from NidTasks.TaskConfig import TaskConfig


@pytest.fixture
def tiny_cfg():
    return TaskConfig(n_experts=4, k=2, n_freq=16, trunk_width=16, trunk_layers=1, head_width=8,
                      epochs=3, warmup_epochs=1, batch_size=4, adapt_steps=20, quadrature=32,
                      ray_count=16, video_hidden=8, video_epochs=3, precision='float64', threads=1)


@pytest.fixture
def tiny_model(tiny_cfg):
    return build_model(tiny_cfg, m=2, channels=1, instances=4, dtype=np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

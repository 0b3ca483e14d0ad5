import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ganland.data import GaussianMixtureSpec
from ganland.train import TrainConfig, train


@pytest.fixture(scope="session")
def nine_mode_spec():
    return GaussianMixtureSpec(M=9, D=9.0)


@pytest.fixture(scope="session")
def mini_run(nine_mode_spec):
    """A short 9-mode training run for unit tests that need a generator
    whose Jacobian field has structure (not acceptance quality)."""
    cfg = TrainConfig(steps=6000, seed=905, eval_interval=6000)
    return train(nine_mode_spec, cfg)

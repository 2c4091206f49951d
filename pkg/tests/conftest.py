import numpy as np
import pytest

from expressive_flow.flowgen import ActionChunk, Condition, ModelConfig, ModelParams
from expressive_flow.synth import synth_corpus

TINY_CFG = ModelConfig(action_dim=5, horizon=8, n_classes=3, history=2,
                       obs_dim=4, widths=(16, 32), groups=8)


@pytest.fixture
def tiny_cfg():
    return TINY_CFG


@pytest.fixture
def tiny_params(tiny_cfg):
    return ModelParams.init(tiny_cfg, seed=1)


@pytest.fixture
def tiny_params_random(tiny_cfg):
    return ModelParams.init(tiny_cfg, seed=1, zero_head=False)


def tiny_batch(cfg: ModelConfig, n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        cond = Condition.from_label(int(rng.integers(cfg.n_classes)), cfg.n_classes,
                                    rng.standard_normal((cfg.history, cfg.obs_dim)))
        out.append((ActionChunk(rng.standard_normal((cfg.horizon, cfg.action_dim))), cond))
    return out


@pytest.fixture(scope="session")
def small_corpus():
    """7 emotions x 2 clips x 80 frames; enough to window every config under test."""
    return synth_corpus(clips_per_emotion=2, frames=80, seed=7)

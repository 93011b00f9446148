import numpy as np
import pytest

from navworld.config import ModelConfig
from navworld.sim.episodes import SimConfig, generate_episode


def micro_model_cfg(**overrides) -> ModelConfig:
    """Tiny config: one latent token per frame, small width."""
    base = dict(
        dim=12, heads=2, patch=8, resolution=8, history_len=2, horizon=2,
        max_instruction_len=4, planner_blocks=1, latent_channels=2,
        dit_blocks=2, former_blocks=1, policy_blocks=4, timestep_mlp_hidden=8,
        sample_steps=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def micro_cfg() -> ModelConfig:
    return micro_model_cfg()


@pytest.fixture(scope="session")
def sim_cfg() -> SimConfig:
    return SimConfig(resolution=16, history_len=2, horizon=2)


@pytest.fixture(scope="session")
def episodes(sim_cfg):
    return [generate_episode(seed, sim_cfg) for seed in range(4)]


def random_batch(cfg: ModelConfig, b: int = 2, seed: int = 0):
    """Synthetic planner/generator inputs (no simulator involved)."""
    rng = np.random.default_rng(seed)
    return {
        "tokens": rng.integers(0, 40, size=(b, cfg.max_instruction_len)),
        "history": rng.random((b, cfg.history_len, cfg.resolution, cfg.resolution, 3)),
        "current": rng.random((b, 3, cfg.resolution, cfg.resolution, 3)),
        "future": rng.random((b, cfg.horizon, cfg.resolution, cfg.resolution, 3)),
        "actions": rng.standard_normal((b, cfg.horizon, 5)),
    }

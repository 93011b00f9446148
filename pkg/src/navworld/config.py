"""Model and training configuration.

Desk-scale defaults: everything is sized to train in minutes on a CPU while
preserving the architectural contracts (context-embedding conditioning,
latent grid layout, fusion tap pairing).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .sim.episodes import SimConfig


@dataclass
class ModelConfig:
    dim: int = 128              # model width D
    heads: int = 4
    patch: int = 8              # pixel patch size P; latent h = w = resolution / P
    resolution: int = 32        # view resolution V (must match SimConfig)
    history_len: int = 4        # k history front views
    horizon: int = 5            # N future frames / action steps / queries
    max_instruction_len: int = 12

    planner_blocks: int = 4
    latent_channels: int = 16
    dit_blocks: int = 6
    former_blocks: int = 4
    policy_blocks: int = 8      # alternating self-/cross-attention
    t_cond: float = 0.05        # conditioning-slot noise level
    sample_steps: int = 8       # Euler steps for flow-matching sampling
    timestep_mlp_hidden: int = 128

    @property
    def latent_hw(self) -> int:
        return self.resolution // self.patch

    @property
    def tokens_per_frame(self) -> int:
        return self.latent_hw ** 2

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


@dataclass
class TrainConfig:
    stage: str = "1a"             # 1a video / 1b policy / 2 joint
    variant: str = "former"       # former | diffusion
    lam: float = 1.0              # total-loss balance: L_VG + lam * L_PH
    mmfca_prob: float = 0.5       # per-sample fusion activation probability (stage 2, diffusion)
    batch_size: int = 8
    steps: int = 2000
    lr: float = 3e-4
    lr_floor_frac: float = 0.1
    weight_decay: float = 0.01
    seed: int = 0
    eval_every: int = 0           # 0 disables mid-training eval
    checkpoint_every: int = 1000
    recon_weight: float = 1.0     # pixel reconstruction term for the frame codec
    # position / angle / arrive balance inside L_PH.  A one-step turn moves
    # the unit heading by only 1 - cos(15deg) ~ 0.03 while a forward step
    # moves position by 0.25, so the angle (and arrive) terms need upweighting
    # for turns and stops to register at all.
    ph_weights: tuple = (1.0, 10.0, 2.0)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if not 0.0 <= self.mmfca_prob <= 1.0:
            raise ValueError("mmfca_prob must be in [0, 1]")
        self.ph_weights = tuple(self.ph_weights)
        if len(self.ph_weights) != 3 or any(w <= 0 for w in self.ph_weights):
            raise ValueError("ph_weights must be three positive factors")
        if self.stage not in ("1a", "1b", "2"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.variant not in ("former", "diffusion"):
            raise ValueError(f"unknown variant {self.variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


def load_configs(path) -> tuple[SimConfig, ModelConfig]:
    """Read a JSON file with optional 'sim' and 'model' sections."""
    data = json.loads(Path(path).read_text())
    sim = SimConfig.from_dict(data.get("sim", {}))
    model = ModelConfig.from_dict(data.get("model", {}))
    if model.resolution != sim.resolution:
        raise ValueError("model.resolution must equal sim.resolution")
    return sim, model


def save_configs(path, sim: SimConfig, model: ModelConfig) -> None:
    Path(path).write_text(json.dumps({"sim": sim.to_dict(), "model": model.to_dict()}, indent=2))

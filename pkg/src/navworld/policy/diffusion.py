"""Flow-matching diffusion policy over encoded action rows.

Action rows (N x 5) are embedded to the model width and processed by an
alternating stack of self- and cross-attention blocks (cross-attention to
the context embedding C), each modulated by the noise timestep.  Trailing
cross-attention blocks carry optional fusion taps that exchange hidden
states with the video generator; with every tap gated off (gamma = 0) the
forward pass is exactly the tap-free computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import (
    LayerNorm,
    Linear,
    Mlp,
    Module,
    MultiHeadAttention,
    Parameter,
    ShapeError,
    Tensor,
    layer_norm,
    timestep_embed,
)
from ..config import ModelConfig
from ..planner import ContextEmbedding
from .fusion import FusionTap, tap_pairs


class PolicyBlock(Module):
    """adaLN-modulated block; attends to itself or to C depending on position."""

    def __init__(self, rng, dim: int, heads: int, cross: bool):
        self.dim = dim
        self.cross = cross
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.mlp = Mlp(rng, dim)
        self.mod = Linear(rng, dim, 6 * dim, zero_init=True)

    def __call__(self, x: Tensor, temb: Tensor, context: Tensor) -> Tensor:
        d = self.dim
        m = self.mod(temb.gelu())
        shift_sa, scale_sa, gate_sa = (m.narrow(-1, i * d, d) for i in range(3))
        shift_ff, scale_ff, gate_ff = (m.narrow(-1, i * d, d) for i in range(3, 6))
        h = layer_norm(x) * (scale_sa + 1.0) + shift_sa
        kv = context if self.cross else h
        x = x + self.attn(h, kv) * gate_sa
        h = layer_norm(x) * (scale_ff + 1.0) + shift_ff
        return x + self.mlp(h) * gate_ff


@dataclass
class PolicyState:
    x: Tensor            # (B, N, D)
    temb: Tensor         # (1, D)
    context: Tensor      # (B, L, D)
    hidden: list = field(default_factory=list)


class DiffusionPolicy(Module):
    """Velocity network v(A_t, t, C) over action rows, with optional taps."""

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig, with_taps: bool = True):
        self.cfg = cfg
        self.in_proj = Linear(rng, 5, cfg.dim)
        self.row_pos = Parameter(rng.normal(0.0, 0.02, size=(cfg.horizon, cfg.dim)))
        self.time_mlp = Mlp(rng, cfg.dim, cfg.timestep_mlp_hidden, cfg.dim)
        self.blocks = [
            PolicyBlock(rng, cfg.dim, cfg.heads, cross=(i % 2 == 1))
            for i in range(cfg.policy_blocks)
        ]
        self.out_ln = LayerNorm(cfg.dim)
        self.head = Linear(rng, cfg.dim, 5)
        self.pairs = tap_pairs(cfg.policy_blocks, cfg.dit_blocks) if with_taps else []
        if with_taps:
            self.taps = [FusionTap(rng, cfg.dim, cfg.heads) for _ in self.pairs]
        else:
            self.taps = []

    def tap_for_block(self, block_idx: int) -> FusionTap | None:
        for (p_idx, _), tap in zip(self.pairs, self.taps):
            if p_idx == block_idx:
                return tap
        return None

    def prepare(self, a_t: Tensor, t: float, C: ContextEmbedding) -> PolicyState:
        cfg = self.cfg
        if a_t.shape[-2:] != (cfg.horizon, 5):
            raise ShapeError(f"action rows {a_t.shape} != (*, {cfg.horizon}, 5)")
        x = self.in_proj(a_t) + self.row_pos.tensor
        temb = self.time_mlp(timestep_embed(np.array([t]), cfg.dim))
        return PolicyState(x, temb, C.tokens)

    def apply_block(self, i: int, state: PolicyState) -> None:
        state.x = self.blocks[i](state.x, state.temb, state.context)
        state.hidden.append(state.x)

    def velocity(self, state: PolicyState) -> Tensor:
        return self.head(self.out_ln(state.x))

    def forward(
        self,
        a_t: Tensor,
        t: float,
        C: ContextEmbedding,
        gamma: int = 0,
        video_states: list[Tensor] | None = None,
        gate: np.ndarray | None = None,
    ) -> Tensor:
        """Standalone pass.  With gamma=1, ``video_states`` must supply one
        video hidden-state tensor per tap (in tap order); the video-side
        updates are computed and discarded — interleaved execution lives in
        the joint driver."""
        if gamma not in (0, 1):
            raise ValueError(f"gamma must be 0 or 1, got {gamma}")
        if gamma == 1 and len(self.pairs) > 0:
            if video_states is None or len(video_states) != len(self.pairs):
                raise ValueError(
                    f"gamma=1 requires {len(self.pairs)} video hidden states"
                )
        state = self.prepare(a_t, t, C)
        tap_no = 0
        for i in range(len(self.blocks)):
            self.apply_block(i, state)
            if gamma == 1 and tap_no < len(self.pairs) and self.pairs[tap_no][0] == i:
                tap = self.taps[tap_no]
                state.x, _ = tap(state.x, video_states[tap_no], gate=gate)
                tap_no += 1
        return self.velocity(state)

    __call__ = forward

"""Diffusion transformer over the multi-slot latent grid.

The token sequence concatenates all frame slots (history, three current
views, future) with h*w latent tokens each.  Every block runs self-attention
with 3D rotary embeddings over the full sequence, cross-attention to the
context embedding C, and an MLP, all modulated by a per-slot noise timestep
(conditioning slots are modulated at time 0, future slots at the sampled t).
The velocity head reads only the future-slot tokens.

The block loop is factored into ``prepare`` / ``apply_block`` / ``velocity``
so a joint driver can interleave generator blocks with policy blocks and
exchange hidden states between them at tapped depths.
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
    ShapeError,
    Tensor,
    layer_norm,
    timestep_embed,
)
from ..config import ModelConfig
from ..planner import ContextEmbedding
from .codec import FrameCodec
from .rope import assign_rope_coords, rope_rotate, rope_tables


def grid_roles(cfg: ModelConfig, n_future: int | None = None) -> list[str]:
    """Slot roles in canonical token order: history, current l/f/r, futures."""
    n = cfg.horizon if n_future is None else n_future
    return (
        ["history"] * cfg.history_len
        + ["current_left", "current_front", "current_right"]
        + ["future"] * n
    )


class DiTBlock(Module):
    """adaLN-modulated block: rotary self-attention, cross-attention to C, MLP."""

    def __init__(self, rng, dim: int, heads: int):
        self.dim = dim
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.cross_ln = LayerNorm(dim)
        self.cross = MultiHeadAttention(rng, dim, heads)
        self.mlp = Mlp(rng, dim)
        # zero-init so every modulated branch starts gated off
        self.mod = Linear(rng, dim, 6 * dim, zero_init=True)

    def __call__(self, x: Tensor, temb: Tensor, context: Tensor, rotate) -> Tensor:
        d = self.dim
        m = self.mod(temb.gelu())
        shift_sa, scale_sa, gate_sa = (m.narrow(-1, i * d, d) for i in range(3))
        shift_ff, scale_ff, gate_ff = (m.narrow(-1, i * d, d) for i in range(3, 6))
        h = layer_norm(x) * (scale_sa + 1.0) + shift_sa
        x = x + self.attn(h, rotate=rotate) * gate_sa
        x = x + self.cross(self.cross_ln(x), context)
        h = layer_norm(x) * (scale_ff + 1.0) + shift_ff
        return x + self.mlp(h) * gate_ff


@dataclass
class DiTState:
    """Mutable per-call activation state threaded through the block loop."""

    x: Tensor                      # (B, L, D) slot tokens
    temb: Tensor                   # (L, D) per-token timestep embedding
    context: Tensor                # (B, L_c, D)
    rotate: object                 # callable applied to head-split q/k
    roles: list
    n_future: int
    hidden: list = field(default_factory=list)  # per-block outputs, for taps


class VideoGenerator(Module):
    """Frame codec + DiT velocity model over the latent grid."""

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self.cfg = cfg
        self.codec = FrameCodec(rng, cfg)
        self.in_proj = Linear(rng, cfg.latent_channels, cfg.dim)
        self.time_mlp = Mlp(rng, cfg.dim, cfg.timestep_mlp_hidden, cfg.dim)
        self.blocks = [DiTBlock(rng, cfg.dim, cfg.heads) for _ in range(cfg.dit_blocks)]
        self.out_ln = LayerNorm(cfg.dim)
        self.head = Linear(rng, cfg.dim, cfg.latent_channels)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def prepare(self, latents: Tensor, roles, t: float, C: ContextEmbedding) -> DiTState:
        """Embed a latent grid (B, S, h*w, c) into the block-loop state."""
        cfg = self.cfg
        b, s, hw, c = latents.shape
        if s != len(roles) or hw != cfg.tokens_per_frame or c != cfg.latent_channels:
            raise ShapeError(
                f"latent grid {latents.shape} does not match roles ({len(roles)}) "
                f"and config (hw={cfg.tokens_per_frame}, c={cfg.latent_channels})"
            )
        g = cfg.latent_hw
        coords = assign_rope_coords(roles, g, g)
        cos, sin = rope_tables(coords, cfg.dim // cfg.heads)
        rotate = lambda qk, query=True: rope_rotate(qk, cos, sin)

        x = self.in_proj(latents).reshape((b, s * hw, cfg.dim))
        slot_t = np.array([t if r == "future" else 0.0 for r in roles])
        temb = self.time_mlp(timestep_embed(slot_t, cfg.dim))       # (S, D)
        temb = temb.index_select(0, np.repeat(np.arange(s), hw))    # (L, D)
        n_future = sum(1 for r in roles if r == "future")
        return DiTState(x, temb, C.tokens, rotate, list(roles), n_future)

    def apply_block(self, i: int, state: DiTState) -> None:
        state.x = self.blocks[i](state.x, state.temb, state.context, state.rotate)
        state.hidden.append(state.x)

    def velocity(self, state: DiTState) -> Tensor:
        """Velocity over future slots only: (B, N, h*w, c)."""
        cfg = self.cfg
        hw = cfg.tokens_per_frame
        n = state.n_future
        if n == 0:
            raise ShapeError("velocity: grid has no future slots")
        start = (len(state.roles) - n) * hw
        xf = state.x.narrow(1, start, n * hw)
        v = self.head(self.out_ln(xf))
        return v.reshape((v.shape[0], n, hw, cfg.latent_channels))

    def forward(self, latents: Tensor, roles, t: float, C: ContextEmbedding):
        """Full pass: returns (velocity, per-block hidden states)."""
        state = self.prepare(latents, roles, t, C)
        for i in range(len(self.blocks)):
            self.apply_block(i, state)
        return self.velocity(state), state.hidden

    __call__ = forward

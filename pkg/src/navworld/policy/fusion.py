"""Bidirectional cross-stream fusion between the action and video streams.

Each tap holds two cross-attention modules: the action stream attends over
video keys/values and the video stream attends over action keys/values.
Both directions read the pre-update inputs, and both updates are residual.
Output projections are zero-initialized, so a freshly constructed tap is an
exact identity on both streams.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import LayerNorm, Module, MultiHeadAttention, Tensor


class FusionTap(Module):
    def __init__(self, rng: np.random.Generator, dim: int, heads: int):
        self.ln_action = LayerNorm(dim)
        self.ln_video = LayerNorm(dim)
        self.action_from_video = MultiHeadAttention(rng, dim, heads, zero_out=True)
        self.video_from_action = MultiHeadAttention(rng, dim, heads, zero_out=True)

    def __call__(
        self, action: Tensor, video: Tensor, gate: np.ndarray | None = None
    ) -> tuple[Tensor, Tensor]:
        """Exchange information between the two streams.

        ``gate`` optionally masks the update per sample (shape broadcastable
        to (B, 1, 1), entries in {0, 1}) so a mixed batch can fuse only some
        samples.
        """
        ha = self.ln_action(action)
        hv = self.ln_video(video)
        da = self.action_from_video(ha, hv)
        dv = self.video_from_action(hv, ha)
        if gate is not None:
            da = da * gate
            dv = dv * gate
        return action + da, video + dv


def tap_pairs(policy_blocks: int, generator_blocks: int) -> list[tuple[int, int]]:
    """Pair policy cross-attention blocks with generator blocks, aligned from
    the end of both stacks.

    Policy blocks alternate self/cross, cross at odd indices; the number of
    taps is min(#cross blocks, #generator blocks).
    """
    cross_idx = [i for i in range(policy_blocks) if i % 2 == 1]
    n = min(len(cross_idx), generator_blocks)
    return list(zip(cross_idx[-n:], range(generator_blocks - n, generator_blocks)))

"""Query-based action head: N learnable queries refined against C.

The queries are concatenated with the context tokens and the joint sequence
runs through a stack of self-attention blocks; the refined query rows are
then mapped one-to-one to action rows by a shared MLP head (updated context
tokens are discarded).
"""

from __future__ import annotations

import numpy as np

from ..autodiff import LayerNorm, Mlp, Module, Parameter, Tensor, TransformerBlock, concat
from ..config import ModelConfig
from ..planner import ContextEmbedding


class ActionFormer(Module):
    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self.cfg = cfg
        self.queries = Parameter(rng.normal(0.0, 0.02, size=(cfg.horizon, cfg.dim)))
        self.blocks = [
            TransformerBlock(rng, cfg.dim, cfg.heads) for _ in range(cfg.former_blocks)
        ]
        self.out_ln = LayerNorm(cfg.dim)
        self.head = Mlp(rng, cfg.dim, out_dim=5)

    def forward(self, C: ContextEmbedding) -> Tensor:
        """C -> (B, N, 5) action rows (X, Y, cos, sin, arrive-logit)."""
        n, d = self.queries.data.shape
        b = C.tokens.shape[0]
        q = self.queries.tensor + Tensor(np.zeros((b, n, d)))
        x = concat([q, C.tokens], axis=1)
        for block in self.blocks:
            x = block(x)
        refined = x.narrow(1, 0, n)
        return self.head(self.out_ln(refined))

    __call__ = forward

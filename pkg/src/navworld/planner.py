"""Context encoder: instruction tokens + history and current views -> C.

Stands in for a large pretrained vision-language planner behind a single
``encode_context`` interface. The output is an (L x D) embedding sequence
with a fixed, documented segment layout that downstream cross-attention
relies on:

    [instruction (max_instruction_len)]
    [history_0 .. history_{k-1}]          (tokens_per_frame each)
    [current_left][current_front][current_right]

Sequence length L = max_instruction_len + (k + 3) * tokens_per_frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Embedding,
    LayerNorm,
    Linear,
    Module,
    Parameter,
    ShapeError,
    Tensor,
    TransformerBlock,
    concat,
)
from .config import ModelConfig
from .patches import patchify
from .sim import tokenizer


@dataclass
class ContextEmbedding:
    """The planner output C: (B, L, D) tokens plus the segment layout."""

    tokens: Tensor
    segments: list[tuple[str, int, int]]

    @property
    def length(self) -> int:
        return self.tokens.shape[-2]

    @property
    def dim(self) -> int:
        return self.tokens.shape[-1]

    def segment_slice(self, name: str) -> slice:
        for seg, start, stop in self.segments:
            if seg == name:
                return slice(start, stop)
        raise KeyError(f"unknown segment {name!r}")


def segment_layout(cfg: ModelConfig) -> list[tuple[str, int, int]]:
    """The fixed token layout of C as a function of config."""
    segs = [("instruction", 0, cfg.max_instruction_len)]
    pos = cfg.max_instruction_len
    tpf = cfg.tokens_per_frame
    for j in range(cfg.history_len):
        segs.append((f"history_{j}", pos, pos + tpf))
        pos += tpf
    for view in ("current_left", "current_front", "current_right"):
        segs.append((view, pos, pos + tpf))
        pos += tpf
    return segs


class ContextEncoder(Module):
    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        d = cfg.dim
        self.cfg = cfg
        self.token_embed = Embedding(rng, tokenizer.VOCAB_SIZE, d)
        self.instr_pos = Parameter(rng.normal(0.0, 0.02, size=(cfg.max_instruction_len, d)))
        self.patch_embed = Linear(rng, cfg.patch * cfg.patch * 3, d)
        self.patch_pos = Parameter(rng.normal(0.0, 0.02, size=(cfg.tokens_per_frame, d)))
        # tags: 0 instruction, 1..k history frames, k+1..k+3 current l/f/r
        self.slot_tags = Parameter(rng.normal(0.0, 0.02, size=(1 + cfg.history_len + 3, d)))
        self.blocks = [TransformerBlock(rng, d, cfg.heads) for _ in range(cfg.planner_blocks)]
        self.final_ln = LayerNorm(d)

    def _embed_frames(self, frames: np.ndarray, tag_start: int) -> Tensor:
        """(B, n, V, V, 3) -> (B, n * tokens_per_frame, D) with position and tags."""
        cfg = self.cfg
        if frames.shape[-2] != cfg.resolution or frames.shape[-3] != cfg.resolution:
            raise ShapeError(
                f"frames have resolution {frames.shape[-3:-1]}, expected {cfg.resolution}"
            )
        b, n = frames.shape[0], frames.shape[1]
        patches = Tensor(patchify(frames, cfg.patch))      # (B, n, p2, P*P*3)
        x = self.patch_embed(patches)
        x = x + self.patch_pos.tensor
        tags = self.slot_tags.tensor.narrow(0, tag_start, n).reshape((n, 1, cfg.dim))
        x = x + tags
        return x.reshape((b, n * cfg.tokens_per_frame, cfg.dim))

    def encode_context(self, token_ids, history: np.ndarray, current: np.ndarray) -> ContextEmbedding:
        """token_ids (B, max_instruction_len) int; history (B, k, V, V, 3);
        current (B, 3, V, V, 3) in (left, front, right) order."""
        cfg = self.cfg
        token_ids = np.asarray(token_ids, dtype=np.intp)
        if token_ids.shape[-1] != cfg.max_instruction_len:
            raise ShapeError(
                f"instruction length {token_ids.shape[-1]} != {cfg.max_instruction_len}"
            )
        if history.shape[1] != cfg.history_len or current.shape[1] != 3:
            raise ShapeError(
                f"expected {cfg.history_len} history frames and 3 current views, "
                f"got {history.shape[1]} and {current.shape[1]}"
            )
        instr = self.token_embed(token_ids) + self.instr_pos.tensor
        instr = instr + self.slot_tags.tensor.narrow(0, 0, 1)
        hist = self._embed_frames(history, tag_start=1)
        cur = self._embed_frames(current, tag_start=1 + cfg.history_len)
        x = concat([instr, hist, cur], axis=1)
        for block in self.blocks:
            x = block(x)
        return ContextEmbedding(self.final_ln(x), segment_layout(cfg))

    __call__ = encode_context

"""3D rotary position embeddings over a multi-view latent frame grid.

Each latent token gets an integer coordinate triple (t', h', w').  The three
current views are virtually arranged side-by-side along the width axis:
front tokens keep their width index w, right tokens map to w + W and left
tokens to w + 2W, where W is the latent grid width.  History slot j keeps
t' = j; all current views share t' = k (the index after history); future
slot m (1-based) gets t' = k + m with plain (h, w) spatial coordinates.

The rotation splits the head dimension into three disjoint even channel
groups (one per axis) and applies a standard rotary rotation within each,
so dot products between rotated queries and keys depend only on per-axis
coordinate differences.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ShapeError, Tensor, concat

ROPE_BASE = 10000.0

_ROLES = ("history", "current_left", "current_front", "current_right", "future")


def axis_groups(head_dim: int) -> tuple[int, int, int]:
    """Split head_dim into three even channel groups (t, h, w)."""
    third = (head_dim // 3 // 2) * 2
    gt = head_dim - 2 * third
    if third < 2 or gt < 2 or gt % 2 != 0:
        raise ShapeError(
            f"head dim {head_dim} cannot be split into three even axis groups"
        )
    return gt, third, third


def assign_rope_coords(roles, height: int, width: int) -> np.ndarray:
    """Coordinate triples (t', h', w') per token for a sequence of frame slots.

    ``roles`` lists one role per slot, in token order; each slot contributes
    height*width tokens in row-major order.  Returns an int array of shape
    (len(roles) * height * width, 3).
    """
    for role in roles:
        if role not in _ROLES:
            raise ValueError(f"unknown slot role {role!r}")
    n_history = sum(1 for r in roles if r == "history")
    current_t = n_history
    hh, ww = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    hh, ww = hh.ravel(), ww.ravel()
    coords = []
    hist_j = 0
    future_m = 0
    for role in roles:
        if role == "history":
            t, off = hist_j, 0
            hist_j += 1
        elif role == "current_front":
            t, off = current_t, 0
        elif role == "current_right":
            t, off = current_t, width
        elif role == "current_left":
            t, off = current_t, 2 * width
        else:  # future
            future_m += 1
            t, off = current_t + future_m, 0
        block = np.stack([np.full_like(hh, t), hh, ww + off], axis=-1)
        coords.append(block)
    return np.concatenate(coords, axis=0).astype(np.int64)


def rope_tables(coords: np.ndarray, head_dim: int, base: float = ROPE_BASE):
    """Precompute per-token (cos, sin) tables of shape (L, head_dim // 2).

    Channel layout matches rope_rotate: for each axis group of size g the
    first g/2 half-channels carry the pair angles coord * base^(-i/(g/2)).
    """
    groups = axis_groups(head_dim)
    angles = []
    for axis, g in enumerate(groups):
        half = g // 2
        freqs = base ** (-np.arange(half) / half)
        angles.append(coords[:, axis : axis + 1].astype(np.float64) * freqs)
    theta = np.concatenate(angles, axis=-1)  # (L, head_dim/2)
    return np.cos(theta), np.sin(theta)


def rope_rotate(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate head-split tokens (..., heads, L, head_dim) by precomputed tables.

    Within each axis group the channels are paired half-split: channel i
    rotates with channel i + g/2 by the shared pair angle.
    """
    head_dim = x.shape[-1]
    groups = axis_groups(head_dim)
    if cos.shape[-1] != head_dim // 2 or cos.shape[-2] != x.shape[-2]:
        raise ShapeError(
            f"rope tables {cos.shape} do not match tokens {x.shape}"
        )
    parts = []
    offset = 0
    pair_offset = 0
    for g in groups:
        half = g // 2
        c = cos[:, pair_offset : pair_offset + half]
        s = sin[:, pair_offset : pair_offset + half]
        x1 = x.narrow(-1, offset, half)
        x2 = x.narrow(-1, offset + half, half)
        parts.append(x1 * c - x2 * s)
        parts.append(x2 * c + x1 * s)
        offset += g
        pair_offset += half
    return concat(parts, axis=-1)

"""Patch layout helpers shared by the context encoder and the frame codec."""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor


def patchify(frames: np.ndarray, patch: int) -> np.ndarray:
    """(..., V, V, 3) -> (..., (V/P)^2, P*P*3), row-major patch order."""
    *lead, v1, v2, c = frames.shape
    if v1 != v2 or v1 % patch != 0:
        raise ShapeError(f"patchify: frame shape {frames.shape} not divisible by patch {patch}")
    g = v1 // patch
    x = frames.reshape(*lead, g, patch, g, patch, c)
    x = np.moveaxis(x, -4, -3)  # (..., g, g, patch, patch, c)
    return x.reshape(*lead, g * g, patch * patch * c)


def unpatchify(x: Tensor, patch: int, channels: int = 3) -> Tensor:
    """(B, h, w, P*P*c) tensor -> (B, h*P, w*P, c)."""
    b, h, w, d = x.shape
    if d != patch * patch * channels:
        raise ShapeError(f"unpatchify: last dim {d} != {patch}*{patch}*{channels}")
    x = x.reshape((b, h, w, patch, patch, channels))
    x = x.transpose((0, 1, 3, 2, 4, 5))
    return x.reshape((b, h * patch, w * patch, channels))

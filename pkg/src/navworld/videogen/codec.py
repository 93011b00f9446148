"""Frame codec: learned linear patch projection between pixels and latents.

A deliberately simple stand-in for a video VAE: encode is a per-patch linear
map from P*P*3 pixels to c latent channels, decode is the learned inverse.
Trained with a pixel reconstruction term alongside the generator.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Linear, Module, ShapeError, Tensor
from ..config import ModelConfig
from ..patches import patchify, unpatchify


class FrameCodec(Module):
    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self.patch = cfg.patch
        self.resolution = cfg.resolution
        self.channels = cfg.latent_channels
        pix = cfg.patch * cfg.patch * 3
        self.enc = Linear(rng, pix, cfg.latent_channels)
        self.dec = Linear(rng, cfg.latent_channels, pix)

    def encode(self, frames: np.ndarray) -> Tensor:
        """(..., V, V, 3) pixels -> (..., h*w, c) latent tokens."""
        if frames.shape[-2] != self.resolution or frames.shape[-3] != self.resolution:
            raise ShapeError(
                f"encode: frame shape {frames.shape} != resolution {self.resolution}"
            )
        return self.enc(Tensor(patchify(np.asarray(frames), self.patch)))

    def decode(self, latents: Tensor) -> Tensor:
        """(..., h*w, c) latent tokens -> (..., V, V, 3) pixels."""
        if latents.shape[-1] != self.channels:
            raise ShapeError(
                f"decode: latent channels {latents.shape[-1]} != {self.channels}"
            )
        g = self.resolution // self.patch
        lead = latents.shape[:-2]
        x = self.dec(latents)
        n = int(np.prod(lead)) if lead else 1
        x = x.reshape((n, g, g, self.patch * self.patch * 3))
        x = unpatchify(x, self.patch)
        return x.reshape(lead + (self.resolution, self.resolution, 3))

    # single-frame aliases; encode/decode already handle arbitrary leading dims
    encode_frame = encode
    decode_frame = decode

    def reconstruction_loss(self, frames: np.ndarray) -> Tensor:
        """Mean squared pixel error of the encode/decode round trip."""
        recon = self.decode(self.encode(frames))
        return ((recon - Tensor(np.asarray(frames))) ** 2).mean()

"""Flow-matching training loss and Euler sampling for the video generator.

Construction: z_t = (1 - t) * z_future + t * eps with target velocity
u = eps - z_future.  The loss is MSE between the predicted and target
velocity over future-slot tokens only.  Conditioning slots (history and
current views) are held at the small fixed noise level t_cond, while their
timestep modulation sees time 0.

The codec is trained by the pixel reconstruction term alone: latents
entering the flow loss are detached, so flow gradients shape the DiT but
never the codec (this keeps the latent space anchored to pixels and rules
out representation collapse).
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..config import ModelConfig
from ..planner import ContextEmbedding
from .dit import VideoGenerator, grid_roles


class FlowError(RuntimeError):
    """Non-finite state encountered during flow integration."""


def _encode_detached(gen: VideoGenerator, frames: np.ndarray) -> np.ndarray:
    return gen.codec.encode(frames).data


def conditioning_latents(
    gen: VideoGenerator,
    history: np.ndarray,
    current: np.ndarray,
    t_cond: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Encode and lightly noise the conditioning slots: (B, k+3, h*w, c)."""
    z = np.concatenate(
        [_encode_detached(gen, history), _encode_detached(gen, current)], axis=1
    )
    eps = rng.standard_normal(z.shape)
    return (1.0 - t_cond) * z + t_cond * eps


def vg_loss(
    gen: VideoGenerator,
    history: np.ndarray,
    current: np.ndarray,
    future: np.ndarray,
    C: ContextEmbedding,
    rng: np.random.Generator,
    t: float | None = None,
) -> Tensor:
    """Eq.-style flow-matching loss over the future front frames."""
    n_future = future.shape[1]
    if n_future == 0:
        raise ValueError("vg_loss requires at least one future frame")
    cfg = gen.cfg
    if t is None:
        t = float(rng.uniform())
        while not 0.0 < t < 1.0:
            t = float(rng.uniform())
    z_cond = conditioning_latents(gen, history, current, cfg.t_cond, rng)
    z_fut = _encode_detached(gen, future)
    eps = rng.standard_normal(z_fut.shape)
    z_t = (1.0 - t) * z_fut + t * eps
    roles = grid_roles(cfg, n_future)
    latents = Tensor(np.concatenate([z_cond, z_t], axis=1))
    v, _ = gen.forward(latents, roles, t, C)
    target = eps - z_fut
    return ((v - Tensor(target)) ** 2).mean()


def sample_future(
    gen: VideoGenerator,
    history: np.ndarray,
    current: np.ndarray,
    C: ContextEmbedding,
    steps: int,
    rng: np.random.Generator,
):
    """Euler-integrate the velocity field from t=1 to t=0; decode to frames.

    Returns (frames, latents): frames (B, N, V, V, 3) clipped to [0, 1].
    Deterministic given the rng state.  Raises FlowError with the step index
    if the state goes non-finite.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cfg = gen.cfg
    b = history.shape[0]
    roles = grid_roles(cfg)
    z_cond = conditioning_latents(gen, history, current, cfg.t_cond, rng)
    z = rng.standard_normal((b, cfg.horizon, cfg.tokens_per_frame, cfg.latent_channels))
    dt = 1.0 / steps
    for i in range(steps):
        t = 1.0 - i * dt
        latents = Tensor(np.concatenate([z_cond, z], axis=1))
        v = gen.forward(latents, roles, t, C)[0].data
        z = z - dt * v
        if not np.all(np.isfinite(z)):
            raise FlowError(f"non-finite latent state at sampler step {i}")
    frames = gen.codec.decode(Tensor(z)).data
    return np.clip(frames, 0.0, 1.0), z

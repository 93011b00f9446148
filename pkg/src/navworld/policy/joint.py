"""Synchronized execution of the video generator and the diffusion policy.

Both streams share a noise time t and run their block stacks interleaved;
at each fusion tap the policy stream (after its paired cross block) and the
generator stream (after its paired DiT block) exchange hidden states through
the tap's bidirectional cross-attention, with both directions reading the
pre-exchange values.  A per-sample gate allows mixed batches where only some
samples fuse.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..planner import ContextEmbedding
from ..videogen.dit import VideoGenerator, grid_roles
from ..videogen.flow import FlowError, conditioning_latents
from .diffusion import DiffusionPolicy
from .flows import flow_targets


def run_joint(
    gen: VideoGenerator,
    policy: DiffusionPolicy,
    latents: Tensor,
    roles,
    a_t: Tensor,
    t: float,
    C: ContextEmbedding,
    gate: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """One fused forward pass; returns (video velocity, action velocity).

    ``gate`` masks the fusion updates per sample; with an all-zero gate the
    result matches the two independent forwards up to floating-point
    addition of zero."""
    if not policy.pairs:
        raise ValueError("run_joint requires a policy built with fusion taps")
    gstate = gen.prepare(latents, roles, t, C)
    pstate = policy.prepare(a_t, t, C)
    gi = pi = 0
    for (p_idx, g_idx), tap in zip(policy.pairs, policy.taps):
        while gi <= g_idx:
            gen.apply_block(gi, gstate)
            gi += 1
        while pi <= p_idx:
            policy.apply_block(pi, pstate)
            pi += 1
        pstate.x, gstate.x = tap(pstate.x, gstate.x, gate=gate)
    while gi < gen.n_blocks:
        gen.apply_block(gi, gstate)
        gi += 1
    while pi < len(policy.blocks):
        policy.apply_block(pi, pstate)
        pi += 1
    return gen.velocity(gstate), policy.velocity(pstate)


def joint_loss(
    gen: VideoGenerator,
    policy: DiffusionPolicy,
    history: np.ndarray,
    current: np.ndarray,
    future: np.ndarray,
    gt_actions: np.ndarray,
    C: ContextEmbedding,
    rng: np.random.Generator,
    gate: np.ndarray | None = None,
    t: float | None = None,
) -> tuple[Tensor, Tensor]:
    """Shared-t flow losses for both streams: returns (L_VG, L_PH)."""
    cfg = gen.cfg
    if t is None:
        t = float(rng.uniform())
        while not 0.0 < t < 1.0:
            t = float(rng.uniform())
    gt = flow_targets(gt_actions)
    z_cond = conditioning_latents(gen, history, current, cfg.t_cond, rng)
    z_fut = gen.codec.encode(future).data
    eps_z = rng.standard_normal(z_fut.shape)
    eps_a = rng.standard_normal(gt.shape)
    z_t = (1.0 - t) * z_fut + t * eps_z
    a_t = (1.0 - t) * gt + t * eps_a
    roles = grid_roles(cfg, future.shape[1])
    latents = Tensor(np.concatenate([z_cond, z_t], axis=1))
    v_z, v_a = run_joint(gen, policy, latents, roles, Tensor(a_t), t, C, gate=gate)
    l_vg = ((v_z - Tensor(eps_z - z_fut)) ** 2).mean()
    l_ph = ((v_a - Tensor(eps_a - gt)) ** 2).mean()
    return l_vg, l_ph


def sample_joint(
    gen: VideoGenerator,
    policy: DiffusionPolicy,
    history: np.ndarray,
    current: np.ndarray,
    C: ContextEmbedding,
    steps: int,
    rng: np.random.Generator,
):
    """Synchronized Euler rollout of both flows on a shared t grid.

    Returns (action rows (B, N, 5), predicted frames (B, N, V, V, 3))."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    cfg = gen.cfg
    b = history.shape[0]
    roles = grid_roles(cfg)
    z_cond = conditioning_latents(gen, history, current, cfg.t_cond, rng)
    z = rng.standard_normal((b, cfg.horizon, cfg.tokens_per_frame, cfg.latent_channels))
    a = rng.standard_normal((b, cfg.horizon, 5))
    dt = 1.0 / steps
    for i in range(steps):
        t = 1.0 - i * dt
        latents = Tensor(np.concatenate([z_cond, z], axis=1))
        v_z, v_a = run_joint(gen, policy, latents, roles, Tensor(a), t, C)
        z = z - dt * v_z.data
        a = a - dt * v_a.data
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(a))):
            raise FlowError(f"non-finite joint state at sampler step {i}")
    frames = np.clip(gen.codec.decode(Tensor(z)).data, 0.0, 1.0)
    return a, frames

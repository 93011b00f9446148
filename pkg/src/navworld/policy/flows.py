"""Flow-matching loss and Euler sampler for the diffusion policy.

Same construction as the video flow: A_t = (1 - t) * A + t * eps, target
velocity eps - A, MSE over all N x 5 entries.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..planner import ContextEmbedding
from ..videogen.flow import FlowError
from .diffusion import DiffusionPolicy

# The arrive column of an encoded action row is a {0, 1} flag, but sampled
# rows are decoded by thresholding that column at 0 (probability 1/2).  Flow
# targets therefore remap the flag to +/-ARRIVE_SCALE so the regressed value
# sits on the logit scale with a margin, instead of exactly on the decision
# boundary.
ARRIVE_SCALE = 2.0


def flow_targets(gt_actions: np.ndarray) -> np.ndarray:
    """Encoded rows (B, N, 5) -> regression targets with a logit-scale arrive."""
    out = np.array(gt_actions, dtype=np.float64)
    out[..., 4] = ARRIVE_SCALE * (2.0 * out[..., 4] - 1.0)
    return out


def diffusion_policy_loss(
    policy: DiffusionPolicy,
    gt_actions: np.ndarray,
    C: ContextEmbedding,
    rng: np.random.Generator,
    t: float | None = None,
    gamma: int = 0,
    video_states=None,
    gate=None,
) -> Tensor:
    """gt_actions: encoded rows (B, N, 5)."""
    gt = flow_targets(gt_actions)
    if t is None:
        t = float(rng.uniform())
        while not 0.0 < t < 1.0:
            t = float(rng.uniform())
    eps = rng.standard_normal(gt.shape)
    a_t = (1.0 - t) * gt + t * eps
    v = policy.forward(Tensor(a_t), t, C, gamma=gamma, video_states=video_states, gate=gate)
    return ((v - Tensor(eps - gt)) ** 2).mean()


def sample_actions(
    policy: DiffusionPolicy,
    C: ContextEmbedding,
    steps: int,
    rng: np.random.Generator,
    gamma: int = 0,
    video_states=None,
) -> np.ndarray:
    """Euler integration from noise at t=1 to action rows at t=0.

    Returns (B, N, 5).  The gamma=1 path here reuses fixed video states at
    every step; the synchronized generator+policy rollout lives in the joint
    module."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    b = C.tokens.shape[0]
    a = rng.standard_normal((b, policy.cfg.horizon, 5))
    dt = 1.0 / steps
    for i in range(steps):
        t = 1.0 - i * dt
        v = policy.forward(Tensor(a), t, C, gamma=gamma, video_states=video_states).data
        a = a - dt * v
        if not np.all(np.isfinite(a)):
            raise FlowError(f"non-finite action state at sampler step {i}")
    return a

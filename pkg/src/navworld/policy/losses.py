"""Action-head training losses.

The planning-head loss is a weighted sum of three terms over the N predicted
action rows (X, Y, cos, sin, arrive-logit):

    L_pos    mean over steps of |dX| + |dY|
    L_angle  1 - mean(cos * cos_gt + sin * sin_gt)
    L_arrive mean binary cross-entropy with logits
    L_PH     l1 * L_pos + l2 * L_angle + l3 * L_arrive

The angle term is computed on the raw (cos, sin) outputs by default;
``normalize=True`` projects predictions to the unit circle first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ShapeError, Tensor


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Numerically stable mean BCE: max(x,0) - x*y + log(1 + exp(-|x|))."""
    t = np.asarray(targets, dtype=logits.data.dtype)
    x = logits
    return (x.relu() - x * t + ((-x.abs()).exp() + 1.0).log()).mean()


@dataclass
class FormerLoss:
    pos: Tensor
    angle: Tensor
    arrive: Tensor
    total: Tensor


def former_loss(
    pred: Tensor,
    gt: np.ndarray,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    normalize: bool = False,
) -> FormerLoss:
    """pred (..., N, 5) against encoded ground truth of the same shape."""
    gt = np.asarray(gt, dtype=pred.data.dtype)
    if pred.shape != gt.shape or pred.shape[-1] != 5:
        raise ShapeError(f"former_loss: pred {pred.shape} vs gt {gt.shape}")
    xy = pred.narrow(-1, 0, 2)
    cs = pred.narrow(-1, 2, 2)
    logit = pred.narrow(-1, 4, 1)
    if normalize:
        norm = ((cs * cs).sum(axis=-1, keepdims=True) + 1e-12) ** -0.5
        cs = cs * norm
    l_pos = (xy - gt[..., 0:2]).abs().sum(axis=-1).mean()
    l_angle = 1.0 - (cs * gt[..., 2:4]).sum(axis=-1).mean()
    l_arrive = bce_with_logits(logit, gt[..., 4:5])
    l1, l2, l3 = weights
    total = l_pos * l1 + l_angle * l2 + l_arrive * l3
    return FormerLoss(l_pos, l_angle, l_arrive, total)

from .former import ActionFormer
from .losses import FormerLoss, bce_with_logits, former_loss
from .fusion import FusionTap, tap_pairs
from .diffusion import DiffusionPolicy, PolicyBlock, PolicyState
from .flows import diffusion_policy_loss, flow_targets, sample_actions
from .joint import joint_loss, run_joint, sample_joint

__all__ = [
    "ActionFormer",
    "FormerLoss", "bce_with_logits", "former_loss",
    "FusionTap", "tap_pairs",
    "DiffusionPolicy", "PolicyBlock", "PolicyState",
    "diffusion_policy_loss", "flow_targets", "sample_actions",
    "joint_loss", "run_joint", "sample_joint",
]

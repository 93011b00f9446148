from .codec import FrameCodec
from .rope import assign_rope_coords, axis_groups, rope_rotate, rope_tables
from .dit import DiTBlock, DiTState, VideoGenerator, grid_roles
from .flow import FlowError, conditioning_latents, sample_future, vg_loss

__all__ = [
    "FrameCodec",
    "assign_rope_coords", "axis_groups", "rope_rotate", "rope_tables",
    "DiTBlock", "DiTState", "VideoGenerator", "grid_roles",
    "FlowError", "conditioning_latents", "sample_future", "vg_loss",
]

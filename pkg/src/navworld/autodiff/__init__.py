from .tensor import Tensor, ShapeError, set_default_dtype, get_default_dtype, concat, stack
from .nn import (
    Parameter,
    Module,
    ModuleList,
    Linear,
    LayerNorm,
    layer_norm,
    Mlp,
    Embedding,
    MultiHeadAttention,
    TransformerBlock,
    timestep_embed,
)
from .optim import AdamW, CosineSchedule, NonFiniteGradient
from .gradcheck import grad_check, NonFiniteValue
from .checkpoint import save_checkpoint, load_checkpoint, config_hash, CheckpointError

__all__ = [
    "Tensor", "ShapeError", "set_default_dtype", "get_default_dtype", "concat", "stack",
    "Parameter", "Module", "ModuleList", "Linear", "LayerNorm", "layer_norm", "Mlp",
    "Embedding", "MultiHeadAttention", "TransformerBlock", "timestep_embed",
    "AdamW", "CosineSchedule", "NonFiniteGradient",
    "grad_check", "NonFiniteValue",
    "save_checkpoint", "load_checkpoint", "config_hash", "CheckpointError",
]

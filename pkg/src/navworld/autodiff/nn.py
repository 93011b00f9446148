"""Building-block neural modules on top of the autodiff tensor.

Parameters are registered by attribute assignment and collected with
hierarchical dotted names; names are unique within a model and are the keys
used by the optimizer and the checkpoint container.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeError, Tensor, get_default_dtype


class Parameter:
    """A trainable tensor plus its optimizer state (Adam moments)."""

    def __init__(self, data: np.ndarray, name: str = ""):
        self.tensor = Tensor(np.asarray(data, dtype=get_default_dtype()), requires_grad=True)
        self.name = name
        self.m: np.ndarray | None = None  # first-moment accumulator
        self.v: np.ndarray | None = None  # second-moment accumulator
        self.frozen = False

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = np.asarray(value, dtype=self.tensor.data.dtype)

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class Module:
    """Minimal module container: tracks parameters and submodules."""

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self.__dict__.setdefault("_params", {})[key] = value
        elif isinstance(value, Module):
            self.__dict__.setdefault("_modules", {})[key] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            self.__dict__.setdefault("_modules", {})[key] = ModuleList(value)
            object.__setattr__(self, key, value)
            return
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix: str = ""):
        for key, p in self.__dict__.get("_params", {}).items():
            name = f"{prefix}{key}"
            p.name = name
            yield name, p
        for key, m in self.__dict__.get("_modules", {}).items():
            yield from m.named_parameters(prefix=f"{prefix}{key}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def freeze(self) -> None:
        for p in self.parameters():
            p.frozen = True

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.frozen = False

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            if state[name].shape != p.data.shape:
                raise ShapeError(
                    f"load: parameter {name!r} has shape {p.data.shape}, state has {state[name].shape}"
                )
            p.data = state[name]


class ModuleList(Module):
    def __init__(self, modules):
        object.__setattr__(self, "items", list(modules))
        for i, m in enumerate(self.items):
            self.__dict__.setdefault("_modules", {})[str(i)] = m

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


class Linear(Module):
    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int, zero_init: bool = False):
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            w = rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=(in_dim, out_dim))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.data.shape[0]:
            raise ShapeError(
                f"linear: input shape {x.shape} does not match weight {self.weight.data.shape}"
            )
        return x @ self.weight.tensor + self.bias.tensor


class LayerNorm(Module):
    """Normalize over the last axis; zero-variance input maps to the bias."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = (var + self.eps) ** -0.5
        return xc * inv * self.gamma.tensor + self.beta.tensor


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Affine-free layer norm over the last axis."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc * (var + eps) ** -0.5


class Mlp(Module):
    def __init__(self, rng, dim: int, hidden: int | None = None, out_dim: int | None = None):
        hidden = hidden or 4 * dim
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, out_dim or dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class Embedding(Module):
    def __init__(self, rng, vocab: int, dim: int, std: float = 0.02):
        self.weight = Parameter(rng.normal(0.0, std, size=(vocab, dim)))

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.intp)
        return self.weight.tensor.index_select(0, ids)


class MultiHeadAttention(Module):
    """Scaled dot-product attention; self-attention when q_input is kv_input.

    ``rotate`` optionally post-processes the head-split query/key tensors
    (shape (..., heads, L, head_dim)), e.g. for rotary position embeddings.
    """

    def __init__(self, rng, dim: int, heads: int, zero_out: bool = False):
        if dim % heads != 0:
            raise ShapeError(f"attention: model dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim, zero_init=zero_out)

    def _split(self, x: Tensor) -> Tensor:
        # (..., L, D) -> (..., heads, L, head_dim)
        new_shape = x.shape[:-1] + (self.heads, self.head_dim)
        return x.reshape(new_shape).swapaxes(-2, -3)

    def _merge(self, x: Tensor) -> Tensor:
        x = x.swapaxes(-2, -3)
        return x.reshape(x.shape[:-2] + (self.heads * self.head_dim,))

    def __call__(self, q_input: Tensor, kv_input: Tensor | None = None, mask=None, rotate=None) -> Tensor:
        kv_input = q_input if kv_input is None else kv_input
        q = self._split(self.wq(q_input))
        k = self._split(self.wk(kv_input))
        v = self._split(self.wv(kv_input))
        if rotate is not None:
            q = rotate(q, query=True)
            k = rotate(k, query=False)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.head_dim))
        if mask is not None:
            scores = scores + Tensor(np.asarray(mask, dtype=get_default_dtype()))
        attn = scores.softmax(axis=-1)
        return self.wo(self._merge(attn @ v))


class TransformerBlock(Module):
    """Pre-LN block: attention (self, or cross when a context is passed) + MLP."""

    def __init__(self, rng, dim: int, heads: int, mlp_ratio: int = 4):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.ln2 = LayerNorm(dim)
        self.mlp = Mlp(rng, dim, mlp_ratio * dim)

    def __call__(self, x: Tensor, context: Tensor | None = None, mask=None, rotate=None) -> Tensor:
        h = self.ln1(x)
        kv = h if context is None else context
        x = x + self.attn(h, kv, mask=mask, rotate=rotate)
        return x + self.mlp(self.ln2(x))


def timestep_embed(t, dim: int, max_period: float = 10000.0) -> Tensor:
    """Sinusoidal embedding of noise timesteps in [0, 1].

    Output layout: [sin(t*f_0..f_{dim/2-1}), cos(t*f_0..)] with
    f_i = max_period^(-i/(dim/2)), scaled so t spans a useful phase range.
    """
    if dim % 2 != 0:
        raise ShapeError(f"timestep_embed: dim must be even, got {dim}")
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    t = np.asarray(t, dtype=get_default_dtype())
    angles = t[..., None] * freqs * 1000.0
    out = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    return Tensor(out.astype(get_default_dtype()))

"""Dense-tensor substrate with reverse-mode automatic differentiation.

Values are numpy arrays; every differentiable op records a backward closure
and the graph is walked in reverse topological order by ``Tensor.backward``.
Precision is controlled globally: float64 for gradient checking / tests,
float32 for training (see ``set_default_dtype``).

Broadcasting rule set: numpy general broadcasting for elementwise ops
(add/sub/mul/div); matmul broadcasts leading batch dimensions and contracts
the last axis of the left operand with the second-to-last of the right.
Gradients of broadcast inputs are summed back down to the input shape.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "set_default_dtype",
    "get_default_dtype",
    "concat",
    "stack",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Set the global precision mode: np.float64 (tests) or np.float32 (training)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def get_default_dtype():
    return _DEFAULT_DTYPE


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over broadcast axes so it matches the input shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_tensor(x) -> "Tensor":
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DEFAULT_DTYPE))


class Tensor:
    """A dense array with an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype == _DEFAULT_DTYPE:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    # ------------------------------------------------------------------ basics

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---------------------------------------------------------------- autograd

    def _accumulate(self, grad: np.ndarray) -> None:
        # Copy on first write: incoming grads may alias a child's grad buffer.
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad += grad

    def backward(self, grad=None) -> None:
        """Reverse-mode sweep from this tensor (scalar unless grad is given)."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without grad requires a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------- elementwise

    def __add__(self, other):
        other = _as_tensor(other)
        out = _make(self.data + other.data, (self, other))
        if out._parents:
            def bwd(g, a=self, b=other):
                if a.requires_grad or a._parents:
                    a._accumulate(_unbroadcast(g, a.shape))
                if b.requires_grad or b._parents:
                    b._accumulate(_unbroadcast(g, b.shape))
            out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out._parents:
            out._backward = lambda g, a=self: a._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = _make(self.data * other.data, (self, other))
        if out._parents:
            def bwd(g, a=self, b=other):
                if a.requires_grad or a._parents:
                    a._accumulate(_unbroadcast(g * b.data, a.shape))
                if b.requires_grad or b._parents:
                    b._accumulate(_unbroadcast(g * a.data, b.shape))
            out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = _make(self.data / other.data, (self, other))
        if out._parents:
            def bwd(g, a=self, b=other):
                if a.requires_grad or a._parents:
                    a._accumulate(_unbroadcast(g / b.data, a.shape))
                if b.requires_grad or b._parents:
                    b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
            out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, exponent: float):
        out = _make(self.data ** exponent, (self,))
        if out._parents:
            def bwd(g, a=self, p=exponent):
                a._accumulate(g * p * a.data ** (p - 1))
            out._backward = bwd
        return out

    def exp(self):
        val = np.exp(self.data)
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g, a=self, v=val: a._accumulate(g * v)
        return out

    def log(self):
        out = _make(np.log(self.data), (self,))
        if out._parents:
            out._backward = lambda g, a=self: a._accumulate(g / a.data)
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g, a=self, v=val: a._accumulate(g * (1.0 - v * v))
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g, a=self, v=val: a._accumulate(g * v * (1.0 - v))
        return out

    def abs(self):
        out = _make(np.abs(self.data), (self,))
        if out._parents:
            out._backward = lambda g, a=self: a._accumulate(g * np.sign(a.data))
        return out

    def relu(self):
        out = _make(np.maximum(self.data, 0.0), (self,))
        if out._parents:
            out._backward = lambda g, a=self: a._accumulate(g * (a.data > 0))
        return out

    def gelu(self):
        """Gaussian error linear unit (tanh approximation; its exact derivative)."""
        c = math.sqrt(2.0 / math.pi)
        x = self.data
        inner = c * (x + 0.044715 * x ** 3)
        t = np.tanh(inner)
        val = 0.5 * x * (1.0 + t)
        out = _make(val, (self,))
        if out._parents:
            def bwd(g, a=self, t=t, x=x, c=c):
                dinner = c * (1.0 + 3 * 0.044715 * x * x)
                dt = (1.0 - t * t) * dinner
                a._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * dt))
            out._backward = bwd
        return out

    # -------------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._parents:
            def bwd(g, a=self, axis=axis, keepdims=keepdims):
                if axis is None:
                    a._accumulate(np.broadcast_to(g, a.shape).copy())
                else:
                    if not keepdims:
                        g = np.expand_dims(g, axis)
                    a._accumulate(np.broadcast_to(g, a.shape).copy())
            out._backward = bwd
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def softmax(self, axis: int = -1):
        """Numerically stable softmax along one axis."""
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        val = e / e.sum(axis=axis, keepdims=True)
        out = _make(val, (self,))
        if out._parents:
            def bwd(g, a=self, s=val, axis=axis):
                dot = (g * s).sum(axis=axis, keepdims=True)
                a._accumulate(s * (g - dot))
            out._backward = bwd
        return out

    # ------------------------------------------------------------ linear algebra

    def matmul(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data
        if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
        out = _make(a @ b, (self, other))
        if out._parents:
            def bwd(g, A=self, B=other):
                if A.requires_grad or A._parents:
                    ga = g @ np.swapaxes(B.data, -1, -2)
                    A._accumulate(_unbroadcast(ga, A.shape))
                if B.requires_grad or B._parents:
                    gb = np.swapaxes(A.data, -1, -2) @ g
                    B._accumulate(_unbroadcast(gb, B.shape))
            out._backward = bwd
        return out

    __matmul__ = matmul

    # ------------------------------------------------------------ shape movement

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,))
        if out._parents:
            out._backward = lambda g, a=self: a._accumulate(g.reshape(a.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        out = _make(self.data.transpose(axes), (self,))
        if out._parents:
            inv = np.argsort(axes)
            out._backward = lambda g, a=self, inv=tuple(inv): a._accumulate(g.transpose(inv))
        return out

    def swapaxes(self, a: int, b: int):
        out = _make(self.data.swapaxes(a, b), (self,))
        if out._parents:
            out._backward = lambda g, t=self, a=a, b=b: t._accumulate(g.swapaxes(a, b))
        return out

    def narrow(self, axis: int, start: int, length: int):
        """Contiguous slice [start, start+length) along one axis."""
        idx = [slice(None)] * self.data.ndim
        idx[axis] = slice(start, start + length)
        idx = tuple(idx)
        out = _make(self.data[idx], (self,))
        if out._parents:
            def bwd(g, a=self, idx=idx):
                full = np.zeros_like(a.data)
                full[idx] = g
                a._accumulate(full)
            out._backward = bwd
        return out

    def index_select(self, axis: int, indices) -> "Tensor":
        """Gather along an axis with an integer index array (scatter-add backward)."""
        indices = np.asarray(indices, dtype=np.intp)
        out = _make(np.take(self.data, indices, axis=axis), (self,))
        if out._parents:
            def bwd(g, a=self, idx=indices, axis=axis):
                full = np.zeros_like(a.data)
                np.add.at(full, (slice(None),) * axis + (idx,), g)
                a._accumulate(full)
            out._backward = bwd
        return out


def _make(data: np.ndarray, inputs: tuple) -> Tensor:
    out = Tensor(data)
    parents = tuple(t for t in inputs if t.requires_grad or t._parents)
    out._parents = parents
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out._parents:
        sizes = [t.data.shape[axis] for t in tensors]
        def bwd(g, ts=tensors, sizes=sizes, axis=axis):
            offset = 0
            for t, s in zip(ts, sizes):
                if t.requires_grad or t._parents:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(offset, offset + s)
                    t._accumulate(g[tuple(idx)])
                offset += s
        out._backward = bwd
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))
    if out._parents:
        def bwd(g, ts=tensors, axis=axis):
            for i, t in enumerate(ts):
                if t.requires_grad or t._parents:
                    t._accumulate(np.take(g, i, axis=axis))
        out._backward = bwd
    return out

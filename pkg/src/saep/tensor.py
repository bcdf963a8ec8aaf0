"""Minimal dense float32 tensors with reverse-mode automatic differentiation.

Every operation records its inputs and a backward closure on a per-call
graph; calling ``backward()`` on a scalar result walks the graph in reverse
topological order and accumulates gradients into the leaves. Graphs are
built fresh on every forward pass and garbage-collected with their tensors.

Operations act on the trailing one or two axes and broadcast over any
leading batch axes, so the same primitives serve both single sequences
(T x d) and batches (B x T x d).
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "DimensionError",
    "no_grad",
    "add",
    "sub",
    "mul",
    "matmul",
    "transpose",
    "reshape",
    "relu",
    "softmax_rows",
    "layer_norm",
    "dropout",
    "cross_entropy",
    "l2_normalize",
    "tsum",
    "tmean",
]


class NonFiniteError(ValueError):
    """A tensor holds NaN or Inf, which the numeric contract forbids."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


_grad_enabled = True
_DTYPE = np.float32


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def compute_dtype(dtype):
    """Temporarily change the storage dtype of newly created tensors.

    Used by the gradient checker to widen accumulation to float64; the
    production dtype is float32.
    """
    global _DTYPE
    prev = _DTYPE
    _DTYPE = dtype
    try:
        yield
    finally:
        _DTYPE = prev


class Tensor:
    """Dense row-major float32 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(
                "tensor contains non-finite values (shape %s)" % (arr.shape,)
            )
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"],
                 backward: Callable[[np.ndarray], None]) -> "Tensor":
        # Interior nodes skip the finiteness scan: non-finite values can
        # only enter through leaves, and they propagate to the scalar loss,
        # which callers check. Re-scanning every intermediate would double
        # the cost of a training step.
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        # Gradients are never mutated in place, so sharing a buffer with a
        # child's gradient (e.g. through transpose views) is safe.
        g = np.asarray(g, dtype=_DTYPE)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self):
        """Reverse-mode sweep from a scalar output."""
        if self.data.size != 1:
            raise DimensionError("backward() requires a scalar, got shape %s"
                                 % (self.shape,))
        # Iterative topological order; recursion depth is unbounded otherwise.
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; full signatures live in the module-level functions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (self.shape,
                                                       self.requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=_DTYPE))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast during the forward op."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.asarray(g, dtype=_DTYPE).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._from_op(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return Tensor._from_op(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs rank >= 2 operands, got %s and %s"
                             % (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul inner extents disagree: %s x %s"
                             % (a.shape, b.shape))
    out = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return Tensor._from_op(out, (a, b), backward)


def transpose(a) -> Tensor:
    """Swap the trailing two axes."""
    a = _as_tensor(a)
    if a.ndim < 2:
        raise DimensionError("transpose needs rank >= 2, got %s" % (a.shape,))
    out = a.data.swapaxes(-1, -2)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.swapaxes(-1, -2))

    return Tensor._from_op(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor._from_op(out, (a,), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    return Tensor._from_op(out, (a,), backward)


def softmax_rows(a) -> Tensor:
    """Softmax over the last axis, stabilized by subtracting the row max."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * y).sum(axis=-1, keepdims=True)
            a._accumulate(y * (g - inner))

    return Tensor._from_op(y, (a,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each trailing-axis row to zero mean / unit variance
    (population variance), then apply the learned affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm affine width %s does not match %s"
                             % (gain.shape, x.shape))
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = (x.data - mu) * inv
    out = gain.data * xhat + bias.data

    def backward(g):
        if x.requires_grad:
            gh = g * gain.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gh - m1 - xhat * m2))
        if gain.requires_grad:
            gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            bias._accumulate(_unbroadcast(g, bias.data.shape))

    return Tensor._from_op(out, (x, gain, bias), backward)


def dropout(x, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scale by 1/keep at train time, identity in eval."""
    x = _as_tensor(x)
    if not train or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1), got %r" % rate)
    # Compare in float32 so a rate that round-trips through float32
    # storage (e.g. in a checkpoint) yields bit-identical masks.
    rate32 = np.float32(rate)
    mask = (rng.random(x.shape, dtype=np.float32) >= rate32)
    mask = mask.astype(np.float32) / (np.float32(1.0) - rate32)
    out = x.data * mask

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor._from_op(out, (x,), backward)


def cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError("cross_entropy expects B x C logits, got %s"
                             % (logits.shape,))
    n, c = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise DimensionError("expected %d labels, got shape %s"
                             % (n, labels.shape))
    if labels.min() < 0 or labels.max() >= c:
        raise IndexError("label out of range [0, %d): %d"
                         % (c, labels[(labels < 0) | (labels >= c)][0]))
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    loss = _DTYPE(-logp[np.arange(n), labels].mean())

    def backward(g):
        if logits.requires_grad:
            p = np.exp(logp)
            p[np.arange(n), labels] -= 1.0
            logits._accumulate(p * (np.float32(g) / np.float32(n)))

    return Tensor._from_op(loss, (logits,), backward)


def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit L2 norm."""
    x = _as_tensor(x)
    norm = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=axis, keepdims=True)
                   + eps).astype(_DTYPE)
    y = x.data / norm

    def backward(g):
        if x.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate((g - y * inner) / norm)

    return Tensor._from_op(y, (x,), backward)


def tsum(a) -> Tensor:
    a = _as_tensor(a)
    out = _DTYPE(a.data.sum(dtype=np.float64))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, np.float32(g)))

    return Tensor._from_op(out, (a,), backward)


def tmean(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size
    out = _DTYPE(a.data.sum(dtype=np.float64) / n)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, np.float32(g) / np.float32(n)))

    return Tensor._from_op(out, (a,), backward)

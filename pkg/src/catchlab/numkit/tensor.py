"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is deliberately small: linear layers, elementwise arithmetic,
ELU, exp, softmax, reductions, reshape/concat, clamp/minimum, and two
attention contractions. Everything is float64; gradient checks against
central finite differences at 1e-4 relative tolerance are only reliable
at that precision.

Graphs are built eagerly: each op returns a new Tensor holding its
parents and a closure that routes the incoming adjoint. `backward()` runs
a topologically sorted sweep from a scalar root and accumulates into
`.grad` of every tensor with `requires_grad`.
"""
from __future__ import annotations

import numpy as np

from ..errors import ContractError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # operator sugar; full implementations live in the module functions
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g, out):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g, out):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g, out):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(data, (a, b), backward)


def neg(a):
    a = as_tensor(a)

    def backward(g, out):
        return (-g,)

    return _node(-a.data, (a,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g, out):
        return g @ b.data.T, a.data.T @ g

    return _node(data, (a, b), backward)


def linear(x, w, b):
    """y = x @ w.T + b with weight stored as (out, in)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight in-dim {w.shape[1]}")
    data = x.data @ w.data.T + b.data

    def backward(g, out):
        gx = g @ w.data
        gw = g.T @ x.data
        gb = g.sum(axis=0) if g.ndim == 2 else g
        return gx, gw, gb

    return _node(data, (x, w, b), backward)


def elu(x):
    x = as_tensor(x)
    data = np.where(x.data > 0.0, x.data, np.expm1(x.data))

    def backward(g, out):
        return (np.where(x.data > 0.0, g, g * (out + 1.0)),)

    return _node(data, (x,), backward)


def exp(x):
    x = as_tensor(x)
    data = np.exp(x.data)

    def backward(g, out):
        return (g * out,)

    return _node(data, (x,), backward)


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g, out):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(data, (x,), backward)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g, out):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).copy(),)

    return _node(data, (x,), backward)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    s = tsum(x, axis, keepdims)
    return mul(s, 1.0 / n)


def tmax(x, axis):
    """Reduce-max along `axis`; gradient routes to the first argmax (ties)."""
    x = as_tensor(x)
    data = x.data.max(axis=axis)
    arg = x.data.argmax(axis=axis)

    def backward(g, out):
        gx = np.zeros_like(x.data)
        idx = list(np.indices(data.shape))
        idx.insert(axis if axis >= 0 else x.data.ndim + axis, arg)
        gx[tuple(idx)] = g
        return (gx,)

    return _node(data, (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g, out):
        return (g.reshape(x.shape),)

    return _node(data, (x,), backward)


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g, out):
        return tuple(np.array_split(g, splits, axis=axis))

    return _node(data, tuple(parts), backward)


def clamp(x, lo, hi):
    """Clip values; gradient passes only where lo <= x <= hi."""
    x = as_tensor(x)
    data = np.clip(x.data, lo, hi)

    def backward(g, out):
        inside = (x.data >= lo) & (x.data <= hi)
        return (g * inside,)

    return _node(data, (x,), backward)


def minimum(a, b):
    """Elementwise min; gradient routes to `a` on ties."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g, out):
        return (_unbroadcast(g * take_a, a.shape),
                _unbroadcast(g * ~take_a, b.shape))

    return _node(data, (a, b), backward)


def take_rows(x, idx):
    """Per-batch row gather: x (B, M, D) with idx (B, M') -> (B, M', D).
    Gradients scatter-add back onto the gathered source rows."""
    x = as_tensor(x)
    idx = np.asarray(idx)
    rows = np.arange(x.shape[0])[:, None]
    data = x.data[rows, idx]

    def backward(g, out):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    return _node(data, (x,), backward)


def attn_scores(keys, query):
    """scores[b, m] = sum_d keys[b, m, d] * query[b, d]."""
    keys, query = as_tensor(keys), as_tensor(query)
    data = np.einsum("bmd,bd->bm", keys.data, query.data)

    def backward(g, out):
        gk = np.einsum("bm,bd->bmd", g, query.data)
        gq = np.einsum("bm,bmd->bd", g, keys.data)
        return gk, gq

    return _node(data, (keys, query), backward)


def attn_apply(weights, values):
    """out[b, d] = sum_m weights[b, m] * values[b, m, d]."""
    weights, values = as_tensor(weights), as_tensor(values)
    data = np.einsum("bm,bmd->bd", weights.data, values.data)

    def backward(g, out):
        gw = np.einsum("bd,bmd->bm", g, values.data)
        gv = np.einsum("bm,bd->bmd", weights.data, g)
        return gw, gv

    return _node(data, (weights, values), backward)


def backward(root):
    """Accumulate d(root)/d(leaf) into `.grad` of every grad-requiring leaf.

    `root` must be a finite scalar.
    """
    if root.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")
    if not np.isfinite(root.data).all():
        raise ContractError("backward root is not finite")

    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    adjoint = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g, node.data)):
            if pg is None:
                continue
            acc = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if acc is None else acc + pg

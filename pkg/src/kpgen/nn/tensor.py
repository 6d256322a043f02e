"""Tape-based reverse-mode differentiation over NumPy arrays.

Each op records its parents and a closure mapping the output gradient to one
gradient per parent. Only the ops the keyphrase model needs are provided.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import kernels

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad=False, _prev=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = _prev
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._prev, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            if node._prev:
                node.grad = None  # free intermediates; leaves keep theirs

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _result(data, parents, backward) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _cast(x, like: Tensor):
    """Lift Python scalars to tensors of ``like``'s dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = _cast(b, a)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = _cast(b, a)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(a.data @ b.data, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis; weight gradients via one 2-D product."""
    out = x.data @ w.data
    if b is not None:
        out += b.data

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g @ w.data.T) if x.requires_grad else None
        gw = x.data.reshape(-1, x.shape[-1]).T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, back)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)

    def back(g):
        gt = np.zeros_like(table.data)
        kernels.scatter_add_rows(gt, ids, g)
        return (gt,)

    return _result(table.data[ids], (table,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    y, xhat, rstd = kernels.layer_norm(x.data, gain.data, bias.data, eps)

    def back(g):
        gx, gg, gb = kernels.layer_norm_backward(g, xhat, rstd, gain.data)
        return gx, gg, gb

    return _result(y, (x, gain, bias), back)


def softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis. ``mask`` (broadcastable, True = allowed)
    sends disallowed entries to exactly zero probability."""
    data = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not np.all(np.broadcast_to(mask, data.shape).any(axis=-1)):
            raise ValueError("softmax row with every position masked")
        data = np.where(mask, data, np.asarray(-1e30, dtype=data.dtype))
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite softmax logits")
    y = kernels.softmax(data)

    def back(g):
        return (kernels.softmax_backward(g, y),)

    return _result(y, (x,), back)


def gelu(x: Tensor) -> Tensor:
    def back(g):
        return (kernels.gelu_backward(g, x.data),)

    return _result(kernels.gelu(x.data), (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def back(g):
        return (g * y * (1.0 - y),)

    return _result(y, (x,), back)


def log(x: Tensor) -> Tensor:
    def back(g):
        return (g / x.data,)

    return _result(np.log(x.data), (x,), back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def back(g):
        return (g * keep,)

    return _result(x.data * keep, (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    def back(g):
        return (g.reshape(x.shape),)

    return _result(x.data.reshape(shape), (x,), back)


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def back(g):
        return (g.transpose(inv),)

    return _result(x.data.transpose(axes), (x,), back)


def concat(xs, axis=-1) -> Tensor:
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(np.concatenate([t.data for t in xs], axis=axis), tuple(xs), back)


def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), back)


def take_last(x: Tensor, idx) -> Tensor:
    """``x[..., idx[...]]`` : gathers one entry along the last axis per row."""
    idx = np.asarray(idx)[..., None]

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g[..., None], axis=-1)
        return (gx,)

    return _result(np.take_along_axis(x.data, idx, axis=-1)[..., 0], (x,), back)

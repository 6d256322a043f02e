"""Layer-level building blocks: dense maps, layer norm, multi-head attention."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParameterStore
from .tensor import Tensor


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def add_dense(store: ParameterStore, name: str, rng, d_in: int, d_out: int, bias=True):
    store.add(f"{name}.w", xavier(rng, d_in, d_out))
    if bias:
        store.add(f"{name}.b", np.zeros(d_out))


def dense(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    """``W x + b`` applied over the last axis (weights stored input-major)."""
    b = store.params.get(f"{name}.b")
    return T.linear(x, store[f"{name}.w"], b)


def add_layer_norm(store: ParameterStore, name: str, d: int):
    store.add(f"{name}.gain", np.ones(d))
    store.add(f"{name}.bias", np.zeros(d))


def layer_norm(store: ParameterStore, name: str, x: Tensor, eps: float = 1e-5) -> Tensor:
    return T.layer_norm(x, store[f"{name}.gain"], store[f"{name}.bias"], eps)


def add_attention(store: ParameterStore, name: str, rng, d: int):
    # a key bias only shifts every score in a row equally, so it is omitted
    for proj in ("q", "k", "v", "o"):
        add_dense(store, f"{name}.{proj}", rng, d, d, bias=proj != "k")


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, d // heads)), (0, 2, 1, 3))


def multi_head_attention(store: ParameterStore, name: str, queries: Tensor, keys: Tensor,
                         values: Tensor, heads: int, mask=None):
    """Scaled dot-product attention over ``heads`` heads.

    ``queries`` is (B, Tq, d); ``keys``/``values`` are (B, Tk, d); ``mask`` is
    boolean, broadcastable to (B, heads, Tq, Tk), True where attending is
    allowed. Returns the projected outputs and the per-head weights
    (B, heads, Tq, Tk).
    """
    b, tq, d = queries.shape
    if d % heads:
        raise ValueError(f"model dimension {d} not divisible by {heads} heads")
    q = _split_heads(dense(store, f"{name}.q", queries), heads)
    k = _split_heads(dense(store, f"{name}.k", keys), heads)
    v = _split_heads(dense(store, f"{name}.v", values), heads)
    scale = 1.0 / np.sqrt(d // heads)
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale)
    weights = T.softmax(scores, mask)
    ctx = T.matmul(weights, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, tq, d))
    return dense(store, f"{name}.o", ctx), weights


def add_feed_forward(store: ParameterStore, name: str, rng, d: int, hidden: int):
    add_dense(store, f"{name}.in", rng, d, hidden)
    add_dense(store, f"{name}.out", rng, hidden, d)


def feed_forward(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    return dense(store, f"{name}.out", T.gelu(dense(store, f"{name}.in", x)))


def nll(probs: Tensor, eps: float = 1e-12) -> Tensor:
    """Elementwise ``-log(p + eps)``."""
    return T.mul(T.log(T.add(probs, eps)), -1.0)

"""Named parameter storage with Adam moment buffers."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .tensor import Tensor


class ParameterStore:
    """Ordered named tensors plus per-tensor Adam moments and a step counter.

    ``frozen_rows`` maps a parameter name to a boolean row mask; masked rows
    never change during optimization.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.frozen_rows: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.ascontiguousarray(value, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in self.params.items()}

    def astype(self, dtype) -> "ParameterStore":
        """Copy of the store in another precision (moments and step kept)."""
        out = ParameterStore(dtype)
        for name, t in self.params.items():
            out.add(name, t.data)
            out.m[name] = self.m[name].astype(dtype)
            out.v[name] = self.v[name].astype(dtype)
        out.step = self.step
        out.frozen_rows = dict(self.frozen_rows)
        return out

    def n_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))


def adam_step(store: ParameterStore, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place; parameters without a gradient
    are treated as having a zero gradient."""
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        rows = store.frozen_rows.get(name)
        if rows is not None:
            g = np.where(rows[:, None], 0.0, g).astype(p.data.dtype)
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        if lr == 0.0:
            continue
        update = (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
        if rows is not None:
            update[rows] = 0.0
        p.data -= update.astype(p.data.dtype)

"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .params import ParameterStore
from .tensor import no_grad


def relative_error(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def grad_check(loss_fn, store: ParameterStore, h: float = 1e-5, samples: int = 200,
               rng: np.random.Generator | None = None, names=None) -> dict[str, float]:
    """Max relative error per tensor between backprop and central differences.

    ``loss_fn()`` must read the parameters from ``store`` and return a scalar
    Tensor. Up to ``samples`` coordinates per tensor are checked (all of them
    when the tensor is smaller). Run in float64.
    """
    if store.dtype != np.float64:
        raise TypeError("grad_check needs a float64 parameter store")
    rng = rng or np.random.default_rng(0)
    store.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss")
    loss.backward()
    analytic = {k: g.copy() for k, g in store.grads().items()}

    worst = {}
    for name, p in store:
        if names is not None and name not in names:
            continue
        flat = p.data.reshape(-1)
        if flat.size <= samples:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples, replace=False)
        a = analytic[name].reshape(-1)[coords]
        num = np.empty(len(coords))
        for j, c in enumerate(coords):
            orig = flat[c]
            with no_grad():
                flat[c] = orig + h
                up = float(loss_fn().data)
                flat[c] = orig - h
                down = float(loss_fn().data)
            flat[c] = orig
            num[j] = (up - down) / (2 * h)
        if not np.all(np.isfinite(num)):
            raise FloatingPointError(f"non-finite loss while perturbing {name}")
        worst[name] = float(relative_error(a, num).max())
    store.zero_grad()
    return worst

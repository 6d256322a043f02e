"""Small numpy neural-network core: tensors with reverse-mode gradients,
layers, parameter storage, Adam and a finite-difference checker.

The three array helpers below are plain forward functions on numpy arrays.
"""

import numpy as np

from . import kernels as _k


def softmax(x) -> np.ndarray:
    """Softmax over the last axis with max subtraction."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite logits")
    return _k.softmax(x)


def dense(x, w, b=None) -> np.ndarray:
    """``W @ x + b`` for a single vector (or ``x @ W.T + b`` for rows)."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"shape mismatch: W is {w.shape}, x is {x.shape}")
    y = x @ w.T
    return y if b is None else y + np.asarray(b, dtype=np.float64)


def layer_norm(x, gain=None, bias=None, eps=1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    gain = np.ones(d) if gain is None else np.asarray(gain, dtype=np.float64)
    bias = np.zeros(d) if bias is None else np.asarray(bias, dtype=np.float64)
    return _k.layer_norm(x, gain, bias, eps)[0]

"""Pure NumPy kernels. Reference semantics for the compiled backend."""

import numpy as np

_GELU_C = float(np.sqrt(2.0 / np.pi))  # python float: keeps float32 inputs float32


def softmax_rows(x):
    """Row-wise softmax of a 2-D array with max subtraction."""
    z = x - x.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def softmax_rows_backward(gy, y):
    return y * (gy - (gy * y).sum(axis=1, keepdims=True))


def layer_norm(x, gain, bias, eps):
    """Returns (y, xhat, rstd); statistics use the biased 1/D variance."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


def layer_norm_backward(gy, xhat, rstd, gain):
    ggain = (gy * xhat).sum(axis=0)
    gbias = gy.sum(axis=0)
    gx_hat = gy * gain
    d = xhat.shape[1]
    gx = (gx_hat - gx_hat.mean(axis=1, keepdims=True)
          - xhat * (gx_hat * xhat).sum(axis=1, keepdims=True) / d) * rstd[:, None]
    return gx, ggain, gbias


def gelu(x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_backward(gy, x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def scatter_add_rows(out, idx, src):
    """out[idx[i]] += src[i] for every row i, in place."""
    np.add.at(out, idx, src)


def copy_scatter(alpha, ids, size):
    """Sum attention weights (rows of ``alpha``) into ``size`` slots keyed by ``ids``."""
    onehot = np.zeros((len(ids), size), dtype=alpha.dtype)
    onehot[np.arange(len(ids)), ids] = 1.0
    return alpha @ onehot

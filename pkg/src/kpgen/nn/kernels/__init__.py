"""Hot kernels with a compiled backend and a NumPy fallback.

The compiled extension is used when it was built; set ``KPGEN_KERNELS=numpy``
to force the fallback (or ``=cython`` to fail loudly when it is missing).
Wrappers accept N-D arrays and operate on the last axis.
"""

import os

import numpy as np

from . import _numpy

_choice = os.environ.get("KPGEN_KERNELS", "auto").lower()
if _choice not in ("auto", "numpy", "cython"):
    raise ImportError(f"KPGEN_KERNELS must be auto, numpy or cython, not {_choice!r}")

_impl = _numpy
BACKEND = "numpy"
if _choice != "numpy":
    try:
        from . import _cython as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise


def use_backend(name: str):
    """Switch backends at runtime (benchmarks and equivalence tests)."""
    global _impl, BACKEND
    if name == "numpy":
        _impl = _numpy
    elif name == "cython":
        from . import _cython
        _impl = _cython
    else:
        raise ValueError(name)
    BACKEND = name


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import _cython  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


def _rows(x):
    return np.ascontiguousarray(x.reshape(-1, x.shape[-1]))


def softmax(x):
    # numpy on every backend (vectorized exp is faster than the compiled loop)
    return _numpy.softmax_rows(_rows(x)).reshape(x.shape)


def softmax_backward(gy, y):
    return _impl.softmax_rows_backward(_rows(gy), _rows(y)).reshape(y.shape)


def layer_norm(x, gain, bias, eps=1e-5):
    y, xhat, rstd = _impl.layer_norm(_rows(x), np.ascontiguousarray(gain),
                                     np.ascontiguousarray(bias), eps)
    return y.reshape(x.shape), xhat, rstd


def layer_norm_backward(gy, xhat, rstd, gain):
    gx, gg, gb = _impl.layer_norm_backward(_rows(gy), xhat, rstd, np.ascontiguousarray(gain))
    return gx.reshape(gy.shape), gg, gb


def gelu(x):
    return _impl.gelu(np.ascontiguousarray(x).reshape(-1)).reshape(x.shape)


def gelu_backward(gy, x):
    flat = _impl.gelu_backward(np.ascontiguousarray(gy).reshape(-1),
                               np.ascontiguousarray(x).reshape(-1))
    return flat.reshape(x.shape)


def scatter_add_rows(out, idx, src):
    _impl.scatter_add_rows(out, np.ascontiguousarray(idx, dtype=np.int64).reshape(-1),
                           _rows(src))


def copy_scatter(alpha, ids, size):
    """Aggregate per-position weights into a ``size``-wide distribution per row."""
    rows = _rows(alpha)
    out = _impl.copy_scatter(rows, np.ascontiguousarray(ids, dtype=np.int64), int(size))
    return out.reshape(alpha.shape[:-1] + (size,))

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and semantics as ``_numpy``.

Row softmax is absent on purpose: NumPy's vectorized exp beats a scalar
libm loop, so the dispatcher always uses the NumPy version.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, tanh, tanhf

cnp.import_array()

ctypedef fused real:
    float
    double

cdef double GELU_C = 0.7978845608028654  # sqrt(2 / pi)


# single-precision libm call on the float path
cdef inline real _tanh(real v) nogil:
    if real is float:
        return tanhf(v)
    else:
        return tanh(v)


def softmax_rows_backward(real[:, ::1] gy, real[:, ::1] y):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    out = np.empty((n, d), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] gx = out
    cdef double dot
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += gy[i, j] * y[i, j]
        for j in range(d):
            gx[i, j] = <real>(y[i, j] * (gy[i, j] - dot))
    return out


def layer_norm(real[:, ::1] x, real[::1] gain, real[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    out = np.empty((n, d), dtype=dt)
    xhat_arr = np.empty((n, d), dtype=dt)
    rstd_arr = np.empty(n, dtype=dt)
    cdef real[:, ::1] y = out
    cdef real[:, ::1] xhat = xhat_arr
    cdef real[::1] rstd = rstd_arr
    cdef double mu, var, r, c
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            c = x[i, j] - mu
            var += c * c
        var /= d
        r = 1.0 / sqrt(var + eps)
        rstd[i] = <real>r
        for j in range(d):
            c = (x[i, j] - mu) * r
            xhat[i, j] = <real>c
            y[i, j] = <real>(c * gain[j] + bias[j])
    return out, xhat_arr, rstd_arr


def layer_norm_backward(real[:, ::1] gy, real[:, ::1] xhat, real[::1] rstd, real[::1] gain):
    cdef Py_ssize_t n = gy.shape[0], d = gy.shape[1], i, j
    dt = np.float32 if real is float else np.float64
    gx_arr = np.empty((n, d), dtype=dt)
    gg_arr = np.zeros(d, dtype=np.float64)
    gb_arr = np.zeros(d, dtype=np.float64)
    cdef real[:, ::1] gx = gx_arr
    cdef double[::1] gg = gg_arr
    cdef double[::1] gb = gb_arr
    cdef double s1, s2, g
    for i in range(n):
        s1 = 0.0
        s2 = 0.0
        for j in range(d):
            gg[j] += gy[i, j] * xhat[i, j]
            gb[j] += gy[i, j]
            g = gy[i, j] * gain[j]
            s1 += g
            s2 += g * xhat[i, j]
        s1 /= d
        s2 /= d
        for j in range(d):
            g = gy[i, j] * gain[j]
            gx[i, j] = <real>((g - s1 - xhat[i, j] * s2) * rstd[i])
    return gx_arr, gg_arr.astype(dt), gb_arr.astype(dt)


def gelu(real[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float32 if real is float else np.float64)
    cdef real[::1] y = out
    cdef real v, c = <real>GELU_C
    for i in range(n):
        v = x[i]
        y[i] = <real>0.5 * v * (1 + _tanh(c * (v + <real>0.044715 * v * v * v)))
    return out


def gelu_backward(real[::1] gy, real[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float32 if real is float else np.float64)
    cdef real[::1] gx = out
    cdef double v, t
    for i in range(n):
        v = x[i]
        t = _tanh(<real>(GELU_C * (v + 0.044715 * v * v * v)))
        gx[i] = <real>(gy[i] * (0.5 * (1.0 + t)
                               + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3 * 0.044715 * v * v)))
    return out


def scatter_add_rows(real[:, ::1] out, const cnp.int64_t[::1] idx, real[:, ::1] src):
    cdef Py_ssize_t n = src.shape[0], d = src.shape[1], i, j, r
    for i in range(n):
        r = idx[i]
        for j in range(d):
            out[r, j] += src[i, j]


def copy_scatter(real[:, ::1] alpha, const cnp.int64_t[::1] ids, Py_ssize_t size):
    cdef Py_ssize_t rows = alpha.shape[0], n = alpha.shape[1], i, j
    out = np.zeros((rows, size), dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] o = out
    for i in range(rows):
        for j in range(n):
            o[i, ids[j]] += alpha[i, j]
    return out

# cython: language_level=3
"""Compiled twins of the numpy kernels in ``pykernels``.

Same signatures, same math; single-threaded C loops. Reduction kernels take
C-contiguous 2-D float64 arrays [rows, width]; elementwise kernels take any
array (copied to contiguous if needed).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

BACKEND = "compiled"

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715


def softmax_lastaxis_fwd(x):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] xv = x_arr
    cdef Py_ssize_t rows = xv.shape[0], width = xv.shape[1]
    out_arr = np.empty((rows, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s, e
    for i in range(rows):
        mx = xv[i, 0]
        for j in range(1, width):
            if xv[i, j] > mx:
                mx = xv[i, j]
        s = 0.0
        for j in range(width):
            e = exp(xv[i, j] - mx)
            out[i, j] = e
            s += e
        for j in range(width):
            out[i, j] /= s
    return out_arr


def softmax_lastaxis_bwd(y, gy):
    y_arr = np.ascontiguousarray(y, dtype=np.float64)
    gy_arr = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, ::1] yv = y_arr
    cdef double[:, ::1] gv = gy_arr
    cdef Py_ssize_t rows = yv.shape[0], width = yv.shape[1]
    out_arr = np.empty((rows, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double inner
    for i in range(rows):
        inner = 0.0
        for j in range(width):
            inner += gv[i, j] * yv[i, j]
        for j in range(width):
            out[i, j] = yv[i, j] * (gv[i, j] - inner)
    return out_arr


def gelu_fwd(x):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.empty_like(x_arr)
    cdef double[::1] xv = x_arr.ravel()
    cdef double[::1] ov = out_arr.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v
    for i in range(n):
        v = xv[i]
        ov[i] = 0.5 * v * (1.0 + tanh(GELU_C * (v + GELU_A * v * v * v)))
    return out_arr


def gelu_bwd(x, gy):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    gy_arr = np.ascontiguousarray(gy, dtype=np.float64)
    out_arr = np.empty_like(x_arr)
    cdef double[::1] xv = x_arr.ravel()
    cdef double[::1] gv = gy_arr.ravel()
    cdef double[::1] ov = out_arr.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v, x2, t, du
    for i in range(n):
        v = xv[i]
        x2 = v * v
        t = tanh(GELU_C * (v + GELU_A * v * x2))
        du = GELU_C * (1.0 + 3.0 * GELU_A * x2)
        ov[i] = gv[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return out_arr


def layernorm_lastaxis_fwd(x, double eps):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] xv = x_arr
    cdef Py_ssize_t rows = xv.shape[0], width = xv.shape[1]
    y_arr = np.empty((rows, width), dtype=np.float64)
    rstd_arr = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] yv = y_arr
    cdef double[::1] rv = rstd_arr
    cdef Py_ssize_t i, j
    cdef double mean, var, c, r
    for i in range(rows):
        mean = 0.0
        for j in range(width):
            mean += xv[i, j]
        mean /= width
        var = 0.0
        for j in range(width):
            c = xv[i, j] - mean
            var += c * c
        var /= width
        r = 1.0 / sqrt(var + eps)
        rv[i] = r
        for j in range(width):
            yv[i, j] = (xv[i, j] - mean) * r
    return y_arr, rstd_arr


def layernorm_lastaxis_bwd(y, rstd, gy):
    y_arr = np.ascontiguousarray(y, dtype=np.float64)
    gy_arr = np.ascontiguousarray(gy, dtype=np.float64)
    rstd_arr = np.ascontiguousarray(rstd, dtype=np.float64)
    cdef double[:, ::1] yv = y_arr
    cdef double[:, ::1] gv = gy_arr
    cdef double[::1] rv = rstd_arr
    cdef Py_ssize_t rows = yv.shape[0], width = yv.shape[1]
    out_arr = np.empty((rows, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double g_mean, gy_y_mean
    for i in range(rows):
        g_mean = 0.0
        gy_y_mean = 0.0
        for j in range(width):
            g_mean += gv[i, j]
            gy_y_mean += gv[i, j] * yv[i, j]
        g_mean /= width
        gy_y_mean /= width
        for j in range(width):
            out[i, j] = rv[i] * (gv[i, j] - g_mean - yv[i, j] * gy_y_mean)
    return out_arr


def moving_average_replicate(x, int kernel):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] xv = x_arr
    cdef Py_ssize_t T = xv.shape[0], N = xv.shape[1]
    cdef Py_ssize_t front = (kernel - 1) // 2
    cdef Py_ssize_t back = kernel // 2
    out_arr = np.empty((T, N), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, n, idx
    cdef double s
    for n in range(N):
        s = 0.0
        for t in range(-front, back + 1):
            idx = t
            if idx < 0:
                idx = 0
            elif idx >= T:
                idx = T - 1
            s += xv[idx, n]
        out[0, n] = s / kernel
        for t in range(1, T):
            idx = t + back
            if idx >= T:
                idx = T - 1
            s += xv[idx, n]
            idx = t - 1 - front
            if idx < 0:
                idx = 0
            s -= xv[idx, n]
            out[t, n] = s / kernel
    return out_arr


def adam_update(p, g, m, v, int t, double lr, double beta1, double beta2, double eps):
    if not (isinstance(p, np.ndarray) and p.dtype == np.float64 and p.flags.c_contiguous):
        raise ValueError("adam_update requires C-contiguous float64 parameter arrays")
    g_arr = np.ascontiguousarray(g, dtype=np.float64)
    cdef double[::1] pv = p.ravel()
    cdef double[::1] gv = g_arr.ravel()
    cdef double[::1] mv = m.ravel()
    cdef double[::1] vv = v.ravel()
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double gi
    for i in range(n):
        gi = gv[i]
        mv[i] = beta1 * mv[i] + (1.0 - beta1) * gi
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * gi * gi
        pv[i] -= (lr * (mv[i] / c1)) / (sqrt(vv[i] / c2) + eps)

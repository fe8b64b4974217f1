# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused C kernels for the hot elementwise and row-reduction loops.

Mirrors the interface of ``vampcf.kernels.ref`` but fuses each operation
into a single pass so no numpy temporaries are allocated. Dense matrix
products stay on BLAS in both backends; these kernels cover everything
around them.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p, sqrt

cnp.import_array()

BACKEND_NAME = "fast"

ctypedef cnp.float64_t f64


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) nogil:
    cdef double m = x if x > 0.0 else 0.0
    return m + log1p(exp(-fabs(x)))


def sigmoid(cnp.ndarray[f64, ndim=2] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _sigmoid(x[i, j])
    return out


def sigmoid_bwd(cnp.ndarray[f64, ndim=2] y, cnp.ndarray[f64, ndim=2] g):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = g[i, j] * y[i, j] * (1.0 - y[i, j])
    return out


def tanh_bwd(cnp.ndarray[f64, ndim=2] y, cnp.ndarray[f64, ndim=2] g):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = g[i, j] * (1.0 - y[i, j] * y[i, j])
    return out


def softplus(cnp.ndarray[f64, ndim=2] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _softplus(x[i, j])
    return out


def softplus_bwd(cnp.ndarray[f64, ndim=2] x, cnp.ndarray[f64, ndim=2] g):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = g[i, j] * _sigmoid(x[i, j])
    return out


def logsumexp_rows(cnp.ndarray[f64, ndim=2] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, 1))
    cdef double mx, s
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(m):
            s += exp(x[i, j] - mx)
        out[i, 0] = mx + log(s)
    return out


def logsumexp_rows_bwd(cnp.ndarray[f64, ndim=2] x, cnp.ndarray[f64, ndim=2] out,
                       cnp.ndarray[f64, ndim=2] g):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] dx = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            dx[i, j] = exp(x[i, j] - out[i, 0]) * g[i, 0]
    return dx


def log_softmax_rows(cnp.ndarray[f64, ndim=2] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    cdef double mx, s, lse
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(m):
            s += exp(x[i, j] - mx)
        lse = mx + log(s)
        for j in range(m):
            out[i, j] = x[i, j] - lse
    return out


def log_softmax_rows_bwd(cnp.ndarray[f64, ndim=2] y, cnp.ndarray[f64, ndim=2] g):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    cdef double gsum
    for i in range(n):
        gsum = 0.0
        for j in range(m):
            gsum += g[i, j]
        for j in range(m):
            out[i, j] = g[i, j] - exp(y[i, j]) * gsum
    return out


def l2_normalize_rows(cnp.ndarray[f64, ndim=2] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    cdef cnp.ndarray[f64, ndim=2] inv = np.empty((n, 1))
    cdef double s, r
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += x[i, j] * x[i, j]
        r = 1.0 / sqrt(s) if s > 0.0 else 1.0
        inv[i, 0] = r
        for j in range(m):
            out[i, j] = x[i, j] * r
    return out, inv


def l2_normalize_rows_bwd(cnp.ndarray[f64, ndim=2] y, cnp.ndarray[f64, ndim=2] inv,
                          cnp.ndarray[f64, ndim=2] g):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef cnp.ndarray[f64, ndim=2] out = np.empty((n, m))
    cdef double dot
    for i in range(n):
        dot = 0.0
        for j in range(m):
            dot += g[i, j] * y[i, j]
        for j in range(m):
            out[i, j] = inv[i, 0] * (g[i, j] - y[i, j] * dot)
    return out


def adam_update(cnp.ndarray[f64, ndim=2] p, cnp.ndarray[f64, ndim=2] g,
                cnp.ndarray[f64, ndim=2] m, cnp.ndarray[f64, ndim=2] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0], c = p.shape[1], i, j
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double mi, vi
    for i in range(n):
        for j in range(c):
            mi = beta1 * m[i, j] + (1.0 - beta1) * g[i, j]
            vi = beta2 * v[i, j] + (1.0 - beta2) * g[i, j] * g[i, j]
            m[i, j] = mi
            v[i, j] = vi
            p[i, j] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)

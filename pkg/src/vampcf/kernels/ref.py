"""Numpy reference implementations of the hot kernels.

Every function here has a fused counterpart in the compiled ``_fast``
extension; this module is the fallback selected at import time when the
extension is unavailable (or when ``VAMPCF_KERNELS=ref`` is set). All
inputs are 2-D C-contiguous float64 arrays unless noted.
"""
import numpy as np

BACKEND_NAME = "ref"


def sigmoid(x):
    """Branch-stable logistic function: never exponentiates a positive arg."""
    out = np.empty_like(x)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def tanh_bwd(y, g):
    return g * (1.0 - y * y)


def softplus(x):
    """log(1 + exp(x)) without overflow: max(x, 0) + log1p(exp(-|x|))."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_bwd(x, g):
    return g * sigmoid(x)


def logsumexp_rows(x):
    """Row-wise log-sum-exp with max subtraction, shape (n, 1)."""
    m = np.max(x, axis=1, keepdims=True)
    return m + np.log(np.sum(np.exp(x - m), axis=1, keepdims=True))


def logsumexp_rows_bwd(x, out, g):
    return np.exp(x - out) * g


def log_softmax_rows(x):
    """Row-wise log-softmax; exp of the result sums to 1 per row."""
    m = np.max(x, axis=1, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def log_softmax_rows_bwd(y, g):
    return g - np.exp(y) * np.sum(g, axis=1, keepdims=True)


def l2_normalize_rows(x):
    """Scale each row to unit L2 norm; all-zero rows pass through unchanged.

    Returns (normalized, inverse_norms) where inverse_norms has shape (n, 1)
    and equals 1.0 on zero rows.
    """
    norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    inv = np.where(norms > 0.0, 1.0 / np.where(norms > 0.0, norms, 1.0), 1.0)
    return x * inv, inv


def l2_normalize_rows_bwd(y, inv, g):
    dot = np.sum(g * y, axis=1, keepdims=True)
    return inv * (g - y * dot)


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected adaptive-moment step, updating p/m/v in place."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)

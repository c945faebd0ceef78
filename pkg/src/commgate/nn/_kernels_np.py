"""Pure-numpy kernels: batched affine layers, activations, Adam update.

Mirrors the API of the compiled extension (_kernels_cy); one of the two is
selected in kernels.py at import time. All arrays are C-contiguous float64.
"""

import numpy as np

# activation ids shared with the compiled kernels
ACT_IDENTITY = 0
ACT_TANH = 1
ACT_RELU = 2
ACT_SIGMOID = 3

BACKEND = "numpy"


def affine_forward(X, W, b):
    """Y = X @ W.T + b for X (B,in), W (out,in), b (out,)."""
    return X @ W.T + b


def affine_backward(X, W, dY, gW, gb):
    """Accumulate gW += dY.T @ X, gb += sum(dY); return dX = dY @ W."""
    gW += dY.T @ X
    gb += dY.sum(axis=0)
    return dY @ W


def act_forward(Z, kind):
    if kind == ACT_IDENTITY:
        return Z
    if kind == ACT_TANH:
        return np.tanh(Z)
    if kind == ACT_RELU:
        return np.maximum(Z, 0.0)
    if kind == ACT_SIGMOID:
        # stable sigmoid
        out = np.empty_like(Z)
        pos = Z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-Z[pos]))
        ez = np.exp(Z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation id {kind}")


def act_backward(A, dA, kind):
    """dZ from post-activation values A and upstream dA."""
    if kind == ACT_IDENTITY:
        return dA.copy()
    if kind == ACT_TANH:
        return dA * (1.0 - A * A)
    if kind == ACT_RELU:
        return dA * (A > 0.0)
    if kind == ACT_SIGMOID:
        return dA * A * (1.0 - A)
    raise ValueError(f"unknown activation id {kind}")


def adam_step(P, G, M, V, t, lr, beta1, beta2, eps):
    """One Adam update of P in place; t is the 1-based step count."""
    M *= beta1
    M += (1.0 - beta1) * G
    V *= beta2
    V += (1.0 - beta2) * (G * G)
    mhat = M / (1.0 - beta1 ** t)
    vhat = V / (1.0 - beta2 ** t)
    P -= lr * mhat / (np.sqrt(vhat) + eps)

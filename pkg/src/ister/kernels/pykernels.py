"""Pure-numpy implementations of the hot kernels.

Every function here has a signature-identical twin in the compiled module
``_ckernels``. The package selects one backend at import time (see
``ister.kernels``), so both must produce the same floating-point results up
to the usual non-associativity of summation order.

Shapes are normalized by the callers: reduction kernels receive 2-D arrays
``[rows, width]`` and reduce along the last axis; elementwise kernels accept
any contiguous array.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# tanh-form GELU constants
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def softmax_lastaxis_fwd(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax of ``x`` [rows, width] along the last axis."""
    shifted = x - x.max(axis=-1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=-1, keepdims=True)
    return shifted


def softmax_lastaxis_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient of row-wise softmax given its output ``y`` and upstream ``gy``."""
    inner = (gy * y).sum(axis=-1, keepdims=True)
    return y * (gy - inner)


def gelu_fwd(x: np.ndarray) -> np.ndarray:
    """GELU in the tanh approximation."""
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_bwd(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient of the tanh-form GELU with respect to its input."""
    x2 = x * x
    inner = _GELU_C * (x + _GELU_A * x * x2)
    t = np.tanh(inner)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def layernorm_lastaxis_fwd(x: np.ndarray, eps: float):
    """Normalize rows of ``x`` [rows, width] to zero mean, unit variance.

    Returns ``(y, rstd)`` where ``rstd`` [rows] is kept for the backward pass.
    """
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    return centered * rstd, rstd[..., 0]


def layernorm_lastaxis_bwd(y: np.ndarray, rstd: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient of the normalization given its output ``y`` and saved ``rstd``."""
    g_mean = gy.mean(axis=-1, keepdims=True)
    gy_y_mean = (gy * y).mean(axis=-1, keepdims=True)
    return rstd[..., None] * (gy - g_mean - y * gy_y_mean)


def moving_average_replicate(x: np.ndarray, kernel: int) -> np.ndarray:
    """Centered moving average along axis 0 of ``x`` [T, N], replicate-padded.

    The first value is repeated ``(kernel - 1) // 2`` times in front and the
    last value ``kernel // 2`` times behind, so the output keeps length T.
    """
    front = (kernel - 1) // 2
    back = kernel // 2
    padded = np.concatenate(
        [np.repeat(x[:1], front, axis=0), x, np.repeat(x[-1:], back, axis=0)], axis=0
    )
    csum = np.zeros((padded.shape[0] + 1,) + padded.shape[1:], dtype=np.float64)
    np.cumsum(padded, axis=0, out=csum[1:])
    return (csum[kernel:] - csum[:-kernel]) / float(kernel)


def adam_update(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """One bias-corrected Adam step, applied to ``p``/``m``/``v`` in place."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)

"""Pure-numpy reference kernels for the 1-D convolution hot path.

These back the ``HNCL_BACKEND=numpy`` fallback and double as the comparison
target for the numba kernels. Forward uses a strided window view + tensordot;
backward folds the K taps with a short Python loop.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Valid 1-D convolution. x: [B, T, Cin], w: [Cout, Cin, K] -> [B, To, Cout]."""
    k = w.shape[2]
    win = sliding_window_view(x, k, axis=1)[:, ::stride]  # [B, To, Cin, K]
    out = np.tensordot(win, w, axes=([2, 3], [1, 2]))     # [B, To, Cout]
    return out + b[None, None, :]


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, grad_out: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv1d_forward w.r.t. input, weights, and bias."""
    _, t, _ = x.shape
    cout, cin, k = w.shape
    to = grad_out.shape[1]
    win = sliding_window_view(x, k, axis=1)[:, ::stride]           # [B, To, Cin, K]
    dw = np.tensordot(grad_out, win, axes=([0, 1], [0, 1]))        # [Cout, Cin, K]
    db = grad_out.sum(axis=(0, 1))
    dx = np.zeros_like(x)
    for tap in range(k):
        # positions t = to*stride + tap receive grad_out @ w[:, :, tap]
        dx[:, tap : tap + stride * to : stride, :] += grad_out @ w[:, :, tap]
    return dx, dw, db

"""Numba-compiled kernels for the 1-D convolution hot path.

The weight tensor is transposed once per call to [Cin, K, Cout] so the
innermost loop runs over the contiguous output-channel axis and vectorizes;
weight gradients are accumulated in that layout and transposed back. No
fastmath and no parallel sections, so results are deterministic for a fixed
input. Import fails cleanly when numba is absent — ``backend`` handles the
fallback.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _conv1d_forward_t(x, wt, b, stride):
    bsz, t, cin = x.shape
    _, k, cout = wt.shape
    to = (t - k) // stride + 1
    out = np.empty((bsz, to, cout), dtype=np.float64)
    for n in range(bsz):
        for j in range(to):
            base = j * stride
            for co in range(cout):
                out[n, j, co] = b[co]
            for tap in range(k):
                for ci in range(cin):
                    v = x[n, base + tap, ci]
                    for co in range(cout):
                        out[n, j, co] += v * wt[ci, tap, co]
    return out


@njit(cache=True)
def _conv1d_backward_t(x, wt, grad_out, stride):
    bsz, t, cin = x.shape
    _, k, cout = wt.shape
    to = grad_out.shape[1]
    dx = np.zeros((bsz, t, cin), dtype=np.float64)
    dwt = np.zeros((cin, k, cout), dtype=np.float64)
    db = np.zeros(cout, dtype=np.float64)
    for n in range(bsz):
        for j in range(to):
            base = j * stride
            for co in range(cout):
                db[co] += grad_out[n, j, co]
            for tap in range(k):
                for ci in range(cin):
                    xv = x[n, base + tap, ci]
                    acc = 0.0
                    for co in range(cout):
                        g = grad_out[n, j, co]
                        dwt[ci, tap, co] += g * xv
                        acc += g * wt[ci, tap, co]
                    dx[n, base + tap, ci] += acc
    return dx, dwt, db


def conv1d_forward(x, w, b, stride):
    wt = np.ascontiguousarray(np.transpose(w, (1, 2, 0)))
    return _conv1d_forward_t(x, wt, b, stride)


def conv1d_backward(x, w, grad_out, stride):
    wt = np.ascontiguousarray(np.transpose(w, (1, 2, 0)))
    dx, dwt, db = _conv1d_backward_t(x, wt, grad_out, stride)
    return dx, np.ascontiguousarray(np.transpose(dwt, (2, 0, 1))), db

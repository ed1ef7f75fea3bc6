"""Numpy convolution kernels (im2col + BLAS matmul).

Fallback backend used when the compiled extension is unavailable. All
functions take and return C-contiguous float64 arrays in NCHW layout and
use the cross-correlation convention (no kernel flip).
"""

import numpy as np

BACKEND_NAME = "numpy"


def conv_output_hw(h, w, kh, kw, stride, padding):
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    return ho, wo


def _pad(x, padding):
    if padding == 0:
        return x
    p = padding
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp, kh, kw, stride, ho, wo):
    """Unfold padded input [B,C,Hp,Wp] into columns [B, C*kh*kw, ho*wo]."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c * kh * kw, ho * wo), dtype=np.float64)
    row = 0
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, ci, i : i + stride * ho : stride, j : j + stride * wo : stride]
                cols[:, row, :] = patch.reshape(b, ho * wo)
                row += 1
    return cols


def conv2d_forward(x, k, stride, padding):
    """x: [B,Ci,H,W], k: [Co,Ci,kh,kw] -> y: [B,Co,Ho,Wo]."""
    b, ci, h, w = x.shape
    co, _, kh, kw = k.shape
    ho, wo = conv_output_hw(h, w, kh, kw, stride, padding)
    cols = _im2col(_pad(x, padding), kh, kw, stride, ho, wo)
    y = np.matmul(k.reshape(co, -1), cols)
    return np.ascontiguousarray(y.reshape(b, co, ho, wo))


def conv2d_backward_input(gy, k, stride, padding, h, w):
    """Gradient w.r.t. the input: col2im scatter-add of k^T @ gy."""
    b, co, ho, wo = gy.shape
    _, ci, kh, kw = k.shape
    gcols = np.matmul(k.reshape(co, -1).T, gy.reshape(b, co, ho * wo))
    p = padding
    gxp = np.zeros((b, ci, h + 2 * p, w + 2 * p), dtype=np.float64)
    row = 0
    for c in range(ci):
        for i in range(kh):
            for j in range(kw):
                gxp[:, c, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                    :, row, :
                ].reshape(b, ho, wo)
                row += 1
    if p == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, p : p + h, p : p + w])


def conv2d_backward_kernels(gy, x, stride, padding, kh, kw):
    """Gradient w.r.t. the kernels, summed over the batch."""
    b, co, ho, wo = gy.shape
    ci = x.shape[1]
    cols = _im2col(_pad(x, padding), kh, kw, stride, ho, wo)
    gk = np.matmul(gy.reshape(b, co, ho * wo), cols.transpose(0, 2, 1)).sum(axis=0)
    return np.ascontiguousarray(gk.reshape(co, ci, kh, kw))

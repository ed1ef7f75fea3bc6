# cython: language_level=3
"""Compiled convolution kernels (direct loops over padded arrays).

Same contract as _kernels_py: C-contiguous float64 NCHW arrays,
cross-correlation convention.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"


def conv_output_hw(h, w, kh, kw, stride, padding):
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    return ho, wo


cdef inline object _pad(cnp.ndarray x, int padding):
    if padding == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_forward(object x, object k, int stride, int padding):
    xp_arr = _pad(np.asarray(x, dtype=np.float64), padding)
    k_arr = np.ascontiguousarray(k, dtype=np.float64)
    cdef double[:, :, :, ::1] xp = xp_arr
    cdef double[:, :, :, ::1] kk = k_arr
    cdef Py_ssize_t b = xp.shape[0], ci = xp.shape[1]
    cdef Py_ssize_t hp = xp.shape[2], wp = xp.shape[3]
    cdef Py_ssize_t co = kk.shape[0], kh = kk.shape[2], kw = kk.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1
    cdef Py_ssize_t wo = (wp - kw) // stride + 1
    y_arr = np.zeros((b, co, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t n, o, c, oh, ow, i, j
    cdef double acc
    with nogil:
        for n in range(b):
            for o in range(co):
                for oh in range(ho):
                    for ow in range(wo):
                        acc = 0.0
                        for c in range(ci):
                            for i in range(kh):
                                for j in range(kw):
                                    acc += xp[n, c, oh * stride + i, ow * stride + j] * kk[o, c, i, j]
                        y[n, o, oh, ow] = acc
    return y_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_backward_input(object gy, object k, int stride, int padding, int h, int w):
    gy_arr = np.ascontiguousarray(gy, dtype=np.float64)
    k_arr = np.ascontiguousarray(k, dtype=np.float64)
    cdef double[:, :, :, ::1] g = gy_arr
    cdef double[:, :, :, ::1] kk = k_arr
    cdef Py_ssize_t b = g.shape[0], co = g.shape[1], ho = g.shape[2], wo = g.shape[3]
    cdef Py_ssize_t ci = kk.shape[1], kh = kk.shape[2], kw = kk.shape[3]
    gxp_arr = np.zeros((b, ci, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    cdef double[:, :, :, ::1] gxp = gxp_arr
    cdef Py_ssize_t n, o, c, oh, ow, i, j
    cdef double gv
    with nogil:
        for n in range(b):
            for o in range(co):
                for oh in range(ho):
                    for ow in range(wo):
                        gv = g[n, o, oh, ow]
                        for c in range(ci):
                            for i in range(kh):
                                for j in range(kw):
                                    gxp[n, c, oh * stride + i, ow * stride + j] += gv * kk[o, c, i, j]
    if padding == 0:
        return gxp_arr
    return np.ascontiguousarray(gxp_arr[:, :, padding : padding + h, padding : padding + w])


@cython.boundscheck(False)
@cython.wraparound(False)
def conv2d_backward_kernels(object gy, object x, int stride, int padding, int kh, int kw):
    gy_arr = np.ascontiguousarray(gy, dtype=np.float64)
    xp_arr = _pad(np.asarray(x, dtype=np.float64), padding)
    cdef double[:, :, :, ::1] g = gy_arr
    cdef double[:, :, :, ::1] xp = xp_arr
    cdef Py_ssize_t b = g.shape[0], co = g.shape[1], ho = g.shape[2], wo = g.shape[3]
    cdef Py_ssize_t ci = xp.shape[1]
    gk_arr = np.zeros((co, ci, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef Py_ssize_t n, o, c, oh, ow, i, j
    cdef double gv
    with nogil:
        for n in range(b):
            for o in range(co):
                for oh in range(ho):
                    for ow in range(wo):
                        gv = g[n, o, oh, ow]
                        for c in range(ci):
                            for i in range(kh):
                                for j in range(kw):
                                    gk[o, c, i, j] += gv * xp[n, c, oh * stride + i, ow * stride + j]
    return gk_arr

# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels: direct loops over typed memoryviews.

Same contracts as the numpy twin in ``_conv_numpy``; padded inputs,
(batch, channels, height, width) activations, (c_out, c_in, kh, kw)
weights, float64 throughout. Loop order keeps accumulation deterministic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, :, ::1] x_pad, double[:, :, :, ::1] weights, int stride):
    cdef Py_ssize_t b = x_pad.shape[0], c_in = x_pad.shape[1]
    cdef Py_ssize_t hp = x_pad.shape[2], wp = x_pad.shape[3]
    cdef Py_ssize_t c_out = weights.shape[0], kh = weights.shape[2], kw = weights.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1, wo = (wp - kw) // stride + 1
    out_arr = np.zeros((b, c_out, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, co, ci, i, j, ki, kj
    cdef double acc
    with nogil:
        for n in range(b):
            for co in range(c_out):
                for i in range(ho):
                    for j in range(wo):
                        acc = 0.0
                        for ci in range(c_in):
                            for ki in range(kh):
                                for kj in range(kw):
                                    acc += (x_pad[n, ci, i * stride + ki, j * stride + kj]
                                            * weights[co, ci, ki, kj])
                        out[n, co, i, j] = acc
    return out_arr


def conv2d_backward_weights(double[:, :, :, ::1] x_pad, double[:, :, :, ::1] dy,
                            int kh, int kw, int stride):
    cdef Py_ssize_t b = x_pad.shape[0], c_in = x_pad.shape[1]
    cdef Py_ssize_t c_out = dy.shape[1], ho = dy.shape[2], wo = dy.shape[3]
    dw_arr = np.zeros((c_out, c_in, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t n, co, ci, i, j, ki, kj
    cdef double g
    with nogil:
        for n in range(b):
            for co in range(c_out):
                for i in range(ho):
                    for j in range(wo):
                        g = dy[n, co, i, j]
                        for ci in range(c_in):
                            for ki in range(kh):
                                for kj in range(kw):
                                    dw[co, ci, ki, kj] += (
                                        g * x_pad[n, ci, i * stride + ki, j * stride + kj])
    return dw_arr


def conv2d_backward_data(double[:, :, :, ::1] dy, double[:, :, :, ::1] weights,
                         pad_shape, int stride):
    cdef Py_ssize_t b = dy.shape[0], c_out = dy.shape[1]
    cdef Py_ssize_t ho = dy.shape[2], wo = dy.shape[3]
    cdef Py_ssize_t c_in = weights.shape[1], kh = weights.shape[2], kw = weights.shape[3]
    dx_arr = np.zeros(pad_shape, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t n, co, ci, i, j, ki, kj
    cdef double g
    with nogil:
        for n in range(b):
            for co in range(c_out):
                for i in range(ho):
                    for j in range(wo):
                        g = dy[n, co, i, j]
                        for ci in range(c_in):
                            for ki in range(kh):
                                for kj in range(kw):
                                    dx[n, ci, i * stride + ki, j * stride + kj] += (
                                        g * weights[co, ci, ki, kj])
    return dx_arr

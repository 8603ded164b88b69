# Compiled convolution and pooling kernels (NCHW, float64).
#
# Same contracts as suscept.kernels.python; direct loops instead of im2col,
# which avoids materializing the column matrix and wins at small batch sizes.

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def conv2d_forward(cnp.ndarray x_in, cnp.ndarray w_in, cnp.ndarray b_in,
                   int stride, int padding):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_in)
    cdef double[:, :, :, ::1] w = np.ascontiguousarray(w_in)
    cdef double[::1] b = np.ascontiguousarray(b_in)
    cdef Py_ssize_t n = x.shape[0], in_ch = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t out_ch = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t out_h = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t out_w = (wd + 2 * padding - kw) // stride + 1
    y_arr = np.empty((n, out_ch, out_h, out_w))
    cdef double[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t i, oc, ic, oh, ow, ki, kj, ih, iw, h0, w0
    cdef double acc
    with nogil:
        for i in range(n):
            for oc in range(out_ch):
                for oh in range(out_h):
                    h0 = oh * stride - padding
                    for ow in range(out_w):
                        w0 = ow * stride - padding
                        acc = b[oc]
                        for ic in range(in_ch):
                            for ki in range(kh):
                                ih = h0 + ki
                                if ih < 0 or ih >= h:
                                    continue
                                for kj in range(kw):
                                    iw = w0 + kj
                                    if iw < 0 or iw >= wd:
                                        continue
                                    acc += w[oc, ic, ki, kj] * x[i, ic, ih, iw]
                        y[i, oc, oh, ow] = acc
    return y_arr


def conv2d_backward(cnp.ndarray x_in, cnp.ndarray w_in, cnp.ndarray dy_in,
                    int stride, int padding, bint need_param_grads):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_in)
    cdef double[:, :, :, ::1] w = np.ascontiguousarray(w_in)
    cdef double[:, :, :, ::1] dy = np.ascontiguousarray(dy_in)
    cdef Py_ssize_t n = x.shape[0], in_ch = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t out_ch = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t out_h = dy.shape[2], out_w = dy.shape[3]

    dx_arr = np.zeros((n, in_ch, h, wd))
    cdef double[:, :, :, ::1] dx = dx_arr
    dw_arr = np.zeros((out_ch, in_ch, kh, kw)) if need_param_grads else None
    db_arr = np.zeros(out_ch) if need_param_grads else None
    cdef double[:, :, :, ::1] dw = dw_arr if need_param_grads else x
    cdef double[::1] db = db_arr if need_param_grads else np.empty(0)

    cdef Py_ssize_t i, oc, ic, oh, ow, ki, kj, ih, iw, h0, w0
    cdef double g
    with nogil:
        for i in range(n):
            for oc in range(out_ch):
                for oh in range(out_h):
                    h0 = oh * stride - padding
                    for ow in range(out_w):
                        w0 = ow * stride - padding
                        g = dy[i, oc, oh, ow]
                        if need_param_grads:
                            db[oc] += g
                        for ic in range(in_ch):
                            for ki in range(kh):
                                ih = h0 + ki
                                if ih < 0 or ih >= h:
                                    continue
                                for kj in range(kw):
                                    iw = w0 + kj
                                    if iw < 0 or iw >= wd:
                                        continue
                                    dx[i, ic, ih, iw] += w[oc, ic, ki, kj] * g
                                    if need_param_grads:
                                        dw[oc, ic, ki, kj] += x[i, ic, ih, iw] * g
    return dx_arr, dw_arr, db_arr


def maxpool_forward(cnp.ndarray x_in, int kernel, int stride):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_in)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t out_h = (h - kernel) // stride + 1
    cdef Py_ssize_t out_w = (wd - kernel) // stride + 1
    y_arr = np.empty((n, c, out_h, out_w))
    idx_arr = np.empty((n, c, out_h, out_w), dtype=np.int64)
    cdef double[:, :, :, ::1] y = y_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t i, ic, oh, ow, ki, kj, h0, w0
    cdef double best, v
    cdef long long best_k
    with nogil:
        for i in range(n):
            for ic in range(c):
                for oh in range(out_h):
                    h0 = oh * stride
                    for ow in range(out_w):
                        w0 = ow * stride
                        best = x[i, ic, h0, w0]
                        best_k = 0
                        for ki in range(kernel):
                            for kj in range(kernel):
                                v = x[i, ic, h0 + ki, w0 + kj]
                                if v > best:
                                    best = v
                                    best_k = ki * kernel + kj
                        y[i, ic, oh, ow] = best
                        idx[i, ic, oh, ow] = best_k
    return y_arr, idx_arr


def maxpool_backward(cnp.ndarray dy_in, cnp.ndarray idx_in, x_shape,
                     int kernel, int stride):
    cdef double[:, :, :, ::1] dy = np.ascontiguousarray(dy_in)
    cdef long long[:, :, :, ::1] idx = np.ascontiguousarray(idx_in)
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3]
    cdef Py_ssize_t out_h = dy.shape[2], out_w = dy.shape[3]
    dx_arr = np.zeros((n, c, h, wd))
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t i, ic, oh, ow
    cdef long long k
    with nogil:
        for i in range(n):
            for ic in range(c):
                for oh in range(out_h):
                    for ow in range(out_w):
                        k = idx[i, ic, oh, ow]
                        dx[i, ic, oh * stride + k // kernel, ow * stride + k % kernel] += dy[i, ic, oh, ow]
    return dx_arr

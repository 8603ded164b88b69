"""Numpy implementations of the convolution and pooling kernels.

Convolutions go through im2col so the inner loop is a single BLAS matmul;
maxpool uses strided windows with a first-wins argmax for deterministic
tie-breaking. All arrays are float64, NCHW.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

NAME = "python"


def _im2col(x, kh, kw, stride, padding):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = as_strided(
        x,
        shape=(n, c, out_h, out_w, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * out_h * out_w, c * kh * kw
    )
    return cols, out_h, out_w


def conv2d_forward(x, w, b, stride, padding):
    n = x.shape[0]
    out_ch, _, kh, kw = w.shape
    cols, out_h, out_w = _im2col(x, kh, kw, stride, padding)
    y = cols @ w.reshape(out_ch, -1).T + b
    return np.ascontiguousarray(
        y.reshape(n, out_h, out_w, out_ch).transpose(0, 3, 1, 2)
    )


def conv2d_backward(x, w, dy, stride, padding, need_param_grads):
    n, _, h, wd = x.shape
    out_ch, in_ch, kh, kw = w.shape
    out_h, out_w = dy.shape[2], dy.shape[3]
    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, out_ch)

    if need_param_grads:
        cols, _, _ = _im2col(x, kh, kw, stride, padding)
        dw = (cols.T @ dy_mat).T.reshape(out_ch, in_ch, kh, kw)
        db = dy_mat.sum(axis=0)
    else:
        dw = db = None

    dcols = dy_mat @ w.reshape(out_ch, -1)
    dwin = dcols.reshape(n, out_h, out_w, in_ch, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    hp, wp = h + 2 * padding, wd + 2 * padding
    dxp = np.zeros((n, in_ch, hp, wp))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += dwin[
                :, :, :, :, i, j
            ]
    dx = dxp[:, :, padding : padding + h, padding : padding + wd]
    return np.ascontiguousarray(dx), dw, db


def maxpool_forward(x, kernel, stride):
    n, c, h, w = x.shape
    out_h = (h - kernel) // stride + 1
    out_w = (w - kernel) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = as_strided(
        x,
        shape=(n, c, out_h, out_w, kernel, kernel),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    flat = windows.reshape(n, c, out_h, out_w, kernel * kernel)
    idx = flat.argmax(axis=4).astype(np.int64)
    y = np.take_along_axis(flat, idx[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool_backward(dy, idx, x_shape, kernel, stride):
    n, c, h, w = x_shape
    out_h, out_w = dy.shape[2], dy.shape[3]
    ih = (np.arange(out_h) * stride)[None, None, :, None] + idx // kernel
    iw = (np.arange(out_w) * stride)[None, None, None, :] + idx % kernel
    nn = np.arange(n)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    flat = ((nn * c + cc) * h + ih) * w + iw
    dx = np.zeros(n * c * h * w)
    np.add.at(dx, flat.ravel(), dy.ravel())
    return dx.reshape(x_shape)

"""Forward and backward passes for the layer types of the network.

All tensors are float64 numpy arrays in NCHW layout. "Same" padding puts
the odd extra row/column at the bottom/right, giving an output side of
ceil(side / stride).
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """(output size, pad before, pad after) along one axis."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def conv2d_forward(x, w, b, stride=2):
    """Cross-correlation of ``x`` (N, C, H, W) with filters ``w`` (F, C, k, k).

    Returns the output and a cache for :func:`conv2d_backward`.
    """
    n, c, h, wd = x.shape
    f, cw, k, _ = w.shape
    if cw != c:
        raise ValueError(f"filters expect {cw} input channels, input has {c}")
    oh, pt, pb = same_padding(h, k, stride)
    ow, pl, pr = same_padding(wd, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    out = cols @ w.reshape(f, -1).T + b
    out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, xp.shape, (pt, pl), cols, w, stride)


def conv2d_backward(dout, cache):
    x_shape, xp_shape, (pt, pl), cols, w, stride = cache
    n, c, h, wd = x_shape
    f, _, k, _ = w.shape
    _, _, oh, ow = dout.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(f, -1)).reshape(n, oh, ow, c, k, k)
    dxp = np.zeros(xp_shape)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, pt:pt + h, pl:pl + wd], dw, db


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    return dout * (x > 0)


def maxpool_forward(x, size=2, stride=2):
    """Max over size x size windows; padded cells never win.

    Returns the pooled tensor and the flat within-window argmax indices.
    """
    n, c, h, wd = x.shape
    oh, pt, pb = same_padding(h, size, stride)
    ow, pl, pr = same_padding(wd, size, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=-np.inf)
    win = sliding_window_view(xp, (size, size), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    win = win.reshape(n, c, oh, ow, size * size)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape, xp.shape, (pt, pl), size, stride)


def maxpool_backward(dout, cache):
    arg, x_shape, xp_shape, (pt, pl), size, stride = cache
    _, _, h, wd = x_shape
    _, _, oh, ow = dout.shape
    dxp = np.zeros(xp_shape)
    for pos in range(size * size):
        i, j = divmod(pos, size)
        dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dout * (arg == pos)
    return dxp[:, :, pt:pt + h, pl:pl + wd]


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(dout, x, w):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


PROB_EPS = 1e-12


def sigmoid_cross_entropy(probs, targets):
    """Mean over rows of the summed per-label binary cross-entropy."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"probabilities {p.shape} and targets {y.shape} differ in shape")
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum() / p.shape[0])


def sigmoid_cross_entropy_with_logits(logits, targets):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and targets {y.shape} differ in shape")
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.sum() / z.shape[0])

"""Numba-compiled twins of the numpy kernels.

Same contracts as ``_numpy_backend``; see that module for layout and
tie rules. Loops are ordered so every accumulation happens in a fixed
sequence per parallel index, keeping results deterministic run-to-run.
fastmath stays off: reassociation would break that guarantee.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv_forward(x, filters, biases):
    b, d, h, w = x.shape
    nf, _, f1, f2 = filters.shape
    oh, ow = h - f1 + 1, w - f2 + 1
    out = np.empty((b, nf, oh, ow), dtype=np.float64)
    for bi in prange(b):
        for f in range(nf):
            for i in range(oh):
                for j in range(ow):
                    out[bi, f, i, j] = biases[f]
        for f in range(nf):
            for c in range(d):
                for u in range(f1):
                    for v in range(f2):
                        fv = filters[f, c, u, v]
                        for i in range(oh):
                            for j in range(ow):
                                out[bi, f, i, j] += fv * x[bi, c, i + u, j + v]
    return out


@njit(parallel=True, cache=True)
def _conv_bwd_filters(x, d_out, nf, d, f1, f2):
    b = x.shape[0]
    oh, ow = d_out.shape[2], d_out.shape[3]
    d_filters = np.zeros((nf, d, f1, f2), dtype=np.float64)
    d_biases = np.zeros(nf, dtype=np.float64)
    for f in prange(nf):
        acc_b = 0.0
        for bi in range(b):
            for i in range(oh):
                for j in range(ow):
                    g = d_out[bi, f, i, j]
                    acc_b += g
                    for c in range(d):
                        for u in range(f1):
                            for v in range(f2):
                                d_filters[f, c, u, v] += g * x[bi, c, i + u, j + v]
        d_biases[f] = acc_b
    return d_filters, d_biases


@njit(parallel=True, cache=True)
def _conv_bwd_input(filters, d_out, h, w):
    b, nf, oh, ow = d_out.shape
    d = filters.shape[1]
    f1, f2 = filters.shape[2], filters.shape[3]
    dx = np.zeros((b, d, h, w), dtype=np.float64)
    for bi in prange(b):
        for f in range(nf):
            for i in range(oh):
                for j in range(ow):
                    g = d_out[bi, f, i, j]
                    for c in range(d):
                        for u in range(f1):
                            for v in range(f2):
                                dx[bi, c, i + u, j + v] += g * filters[f, c, u, v]
    return dx


def conv_backward(x, filters, d_out, need_dx=True):
    nf, d, f1, f2 = filters.shape
    d_filters, d_biases = _conv_bwd_filters(x, d_out, nf, d, f1, f2)
    dx = _conv_bwd_input(filters, d_out, x.shape[2], x.shape[3]) if need_dx else None
    return dx, d_filters, d_biases


@njit(parallel=True, cache=True)
def maxpool_forward(x):
    b, d, h, w = x.shape
    ph, pw = h // 2, w // 2
    out = np.empty((b, d, ph, pw), dtype=np.float64)
    idx = np.empty((b, d, ph, pw), dtype=np.int8)
    for bi in prange(b):
        for c in range(d):
            for i in range(ph):
                for j in range(pw):
                    best = x[bi, c, 2 * i, 2 * j]
                    k = 0
                    if x[bi, c, 2 * i, 2 * j + 1] > best:
                        best = x[bi, c, 2 * i, 2 * j + 1]
                        k = 1
                    if x[bi, c, 2 * i + 1, 2 * j] > best:
                        best = x[bi, c, 2 * i + 1, 2 * j]
                        k = 2
                    if x[bi, c, 2 * i + 1, 2 * j + 1] > best:
                        best = x[bi, c, 2 * i + 1, 2 * j + 1]
                        k = 3
                    out[bi, c, i, j] = best
                    idx[bi, c, i, j] = k
    return out, idx


@njit(parallel=True, cache=True)
def maxpool_backward(d_out, idx, h, w):
    b, d, ph, pw = d_out.shape
    dx = np.zeros((b, d, h, w), dtype=np.float64)
    for bi in prange(b):
        for c in range(d):
            for i in range(ph):
                for j in range(pw):
                    k = idx[bi, c, i, j]
                    dx[bi, c, 2 * i + k // 2, 2 * j + k % 2] = d_out[bi, c, i, j]
    return dx

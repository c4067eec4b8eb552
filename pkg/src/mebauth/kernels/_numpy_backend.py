"""Pure-numpy convolution and pooling kernels.

All kernels take batched float64 tensors in (batch, maps, rows, cols)
layout. Convolution is valid cross-correlation (no kernel flip), stride
1. Pooling is 2x2 non-overlapping with a trailing odd row/column
dropped; window argmax ties resolve to the first position in row-major
scan order.

Convolutions are evaluated as im2col matrix products. The column buffer
is capped at ``COL_BUFFER_BYTES`` by chunking over the batch axis;
chunks are accumulated in a fixed order so results are deterministic for
a given chunk size.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

COL_BUFFER_BYTES = 1 << 27  # 128 MiB


def _batch_chunk(n_samples: int, per_sample_cols: int) -> int:
    per_sample_bytes = per_sample_cols * 8
    chunk = max(1, COL_BUFFER_BYTES // max(per_sample_bytes, 1))
    return min(n_samples, chunk)


def _windows(x: np.ndarray, f1: int, f2: int) -> np.ndarray:
    """Sliding-window view of shape (B, d, oh, ow, f1, f2); no copy."""
    b, d, h, w = x.shape
    oh, ow = h - f1 + 1, w - f2 + 1
    sb, sd, sh, sw = x.strides
    return as_strided(
        x,
        shape=(b, d, oh, ow, f1, f2),
        strides=(sb, sd, sh, sw, sh, sw),
        writeable=False,
    )


def conv_forward(x: np.ndarray, filters: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """(B, d, h, w) -> (B, F, h-f1+1, w-f2+1), pre-activation."""
    b, d, h, w = x.shape
    nf, _, f1, f2 = filters.shape
    oh, ow = h - f1 + 1, w - f2 + 1
    out = np.empty((b, nf, oh, ow), dtype=np.float64)
    fmat = filters.reshape(nf, d * f1 * f2)
    chunk = _batch_chunk(b, oh * ow * d * f1 * f2)
    for s in range(0, b, chunk):
        e = min(s + chunk, b)
        win = _windows(x[s:e], f1, f2)  # (c, d, oh, ow, f1, f2)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape((e - s) * oh * ow, d * f1 * f2)
        prod = cols @ fmat.T  # (c*oh*ow, F)
        out[s:e] = prod.reshape(e - s, oh, ow, nf).transpose(0, 3, 1, 2)
    out += biases[None, :, None, None]
    return out


def conv_backward(
    x: np.ndarray,
    filters: np.ndarray,
    d_out: np.ndarray,
    need_dx: bool = True,
):
    """Gradients of the valid cross-correlation.

    Returns (dx, d_filters, d_biases); dx is None when need_dx is False.
    All gradients are sums over the batch.
    """
    b, d, h, w = x.shape
    nf, _, f1, f2 = filters.shape
    _, _, oh, ow = d_out.shape
    d_biases = d_out.sum(axis=(0, 2, 3))
    d_filters = np.zeros((nf, d * f1 * f2), dtype=np.float64)
    dx = np.zeros_like(x) if need_dx else None
    fmat = filters.reshape(nf, d * f1 * f2)
    chunk = _batch_chunk(b, oh * ow * d * f1 * f2)
    for s in range(0, b, chunk):
        e = min(s + chunk, b)
        win = _windows(x[s:e], f1, f2)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape((e - s) * oh * ow, d * f1 * f2)
        g = d_out[s:e].transpose(0, 2, 3, 1).reshape((e - s) * oh * ow, nf)
        d_filters += g.T @ cols
        if need_dx:
            dcols = (g @ fmat).reshape(e - s, oh, ow, d, f1, f2)
            for u in range(f1):
                for v in range(f2):
                    dx[s:e, :, u : u + oh, v : v + ow] += dcols[:, :, :, :, u, v].transpose(
                        0, 3, 1, 2
                    )
    return dx, d_filters.reshape(nf, d, f1, f2), d_biases


def maxpool_forward(x: np.ndarray):
    """2x2/stride-2 max pool. Returns (out, idx).

    idx holds the argmax position within each window, 0..3 in row-major
    window order; np.argmax keeps the first maximum, which is the tie
    rule.
    """
    b, d, h, w = x.shape
    ph, pw = h // 2, w // 2
    v = (
        x[:, :, : 2 * ph, : 2 * pw]
        .reshape(b, d, ph, 2, pw, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, d, ph, pw, 4)
    )
    idx = v.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(v, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool_backward(d_out: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Route pooled gradients back to the recorded argmax positions."""
    b, d, ph, pw = d_out.shape
    buf = np.zeros((b, d, ph, pw, 4), dtype=np.float64)
    np.put_along_axis(buf, idx[..., None].astype(np.intp), d_out[..., None], axis=-1)
    dx = np.zeros((b, d, h, w), dtype=np.float64)
    dx[:, :, : 2 * ph, : 2 * pw] = (
        buf.reshape(b, d, ph, pw, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, d, 2 * ph, 2 * pw)
    )
    return dx

"""Convolution and pooling kernels against brute-force oracles.

The oracles are written as plain quadruple loops straight from the
definitions; the kernels under test must agree to float accuracy, and
the two backends must agree with each other.
"""

import os
import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from mebauth.kernels import _numpy_backend
from mebauth.rng import make_rng

try:
    from mebauth.kernels import _numba_backend

    BACKENDS = [("numpy", _numpy_backend), ("numba", _numba_backend)]
except ImportError:  # pragma: no cover
    _numba_backend = None
    BACKENDS = [("numpy", _numpy_backend)]


# ---------------------------------------------------------------------------
# oracles


def conv_oracle(x, filters, biases):
    """Valid cross-correlation, no kernel flip, straight quadruple loop."""
    b, d, h, w = x.shape
    nf, _, f1, f2 = filters.shape
    oh, ow = h - f1 + 1, w - f2 + 1
    out = np.zeros((b, nf, oh, ow))
    for bi in range(b):
        for f in range(nf):
            for i in range(oh):
                for j in range(ow):
                    window = x[bi, :, i : i + f1, j : j + f2]
                    out[bi, f, i, j] = np.sum(window * filters[f]) + biases[f]
    return out


def pool_oracle(x):
    """2x2 stride-2 max; first maximum in row-major window order wins."""
    b, d, h, w = x.shape
    ph, pw = h // 2, w // 2
    out = np.zeros((b, d, ph, pw))
    idx = np.zeros((b, d, ph, pw), dtype=np.int64)
    for bi in range(b):
        for di in range(d):
            for i in range(ph):
                for j in range(pw):
                    flat = x[bi, di, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].ravel()
                    k = int(np.argmax(flat))  # first occurrence
                    out[bi, di, i, j] = flat[k]
                    idx[bi, di, i, j] = k
    return out, idx


def central_diff(loss, arr, eps=1e-6):
    """Numeric gradient of a scalar loss w.r.t. every element of arr."""
    grad = np.zeros_like(arr)
    for i in range(arr.size):
        orig = arr.flat[i]
        arr.flat[i] = orig + eps
        up = loss()
        arr.flat[i] = orig - eps
        down = loss()
        arr.flat[i] = orig
        grad.flat[i] = (up - down) / (2 * eps)
    return grad


@pytest.fixture(params=BACKENDS, ids=[name for name, _ in BACKENDS])
def backend(request):
    return request.param[1]


# ---------------------------------------------------------------------------
# forward


def test_conv_forward_matches_oracle(backend):
    rng = make_rng(10)
    x = rng.standard_normal((3, 2, 9, 8))
    filters = rng.standard_normal((4, 2, 3, 2))
    biases = rng.standard_normal(4)
    got = backend.conv_forward(x, filters, biases)
    npt.assert_allclose(got, conv_oracle(x, filters, biases), rtol=1e-12, atol=1e-12)


def test_conv_forward_single_pixel_filter(backend):
    rng = make_rng(11)
    x = rng.standard_normal((2, 1, 5, 5))
    filters = np.full((1, 1, 1, 1), 2.0)
    biases = np.array([0.5])
    got = backend.conv_forward(x, filters, biases)
    npt.assert_allclose(got, 2.0 * x + 0.5, rtol=1e-15, atol=0)


def test_maxpool_forward_matches_oracle(backend):
    rng = make_rng(12)
    x = rng.standard_normal((2, 3, 6, 8))
    out, idx = backend.maxpool_forward(x)
    ref_out, ref_idx = pool_oracle(x)
    npt.assert_array_equal(out, ref_out)
    npt.assert_array_equal(np.asarray(idx, dtype=np.int64), ref_idx)


def test_maxpool_drops_trailing_odd_row_col(backend):
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 4, :] = 100.0  # trailing row must never win
    x[0, 0, :, 4] = 100.0  # trailing col must never win
    x[0, 0, 1, 1] = 7.0
    out, _ = backend.maxpool_forward(x)
    assert out.shape == (1, 1, 2, 2)
    assert out.max() == 7.0


def test_maxpool_tie_keeps_first_in_scan_order(backend):
    x = np.zeros((1, 1, 2, 2))
    out, idx = backend.maxpool_forward(x)  # all equal: index 0
    assert int(np.asarray(idx).ravel()[0]) == 0

    x = np.array([[[[3.0, 5.0], [5.0, 5.0]]]])
    out, idx = backend.maxpool_forward(x)  # first 5 is at position 1
    assert out[0, 0, 0, 0] == 5.0
    assert int(np.asarray(idx).ravel()[0]) == 1


# ---------------------------------------------------------------------------
# backward, against finite differences


def test_conv_backward_matches_finite_differences(backend):
    rng = make_rng(13)
    x = rng.standard_normal((2, 2, 6, 5))
    filters = rng.standard_normal((3, 2, 2, 3))
    biases = rng.standard_normal(3)
    weight = rng.standard_normal((2, 3, 5, 3))  # fixed projection to a scalar

    def loss():
        return float(np.sum(backend.conv_forward(x, filters, biases) * weight))

    dx, d_filters, d_biases = backend.conv_backward(x, filters, weight)
    npt.assert_allclose(d_filters, central_diff(loss, filters), rtol=1e-6, atol=1e-8)
    npt.assert_allclose(d_biases, central_diff(loss, biases), rtol=1e-6, atol=1e-8)
    npt.assert_allclose(dx, central_diff(loss, x), rtol=1e-6, atol=1e-8)


def test_conv_backward_skips_dx_on_request(backend):
    rng = make_rng(14)
    x = rng.standard_normal((1, 1, 4, 4))
    filters = rng.standard_normal((2, 1, 2, 2))
    d_out = rng.standard_normal((1, 2, 3, 3))
    dx, d_filters, d_biases = backend.conv_backward(x, filters, d_out, False)
    assert dx is None
    assert d_filters.shape == filters.shape
    assert d_biases.shape == (2,)


def test_maxpool_backward_matches_finite_differences(backend):
    rng = make_rng(15)
    x = rng.standard_normal((2, 2, 5, 6))  # odd height exercises the dropped row
    weight = rng.standard_normal((2, 2, 2, 3))

    def loss():
        out, _ = backend.maxpool_forward(x)
        return float(np.sum(out * weight))

    _, idx = backend.maxpool_forward(x)
    dx = backend.maxpool_backward(weight, idx, 5, 6)
    # random floats: no ties, so the max stays put under small perturbation
    npt.assert_allclose(dx, central_diff(loss, x), rtol=1e-6, atol=1e-9)


def test_maxpool_backward_routes_to_argmax_only(backend):
    x = np.array([[[[1.0, 4.0], [2.0, 3.0]]]])
    out, idx = backend.maxpool_forward(x)
    dx = backend.maxpool_backward(np.array([[[[10.0]]]]), idx, 2, 2)
    npt.assert_array_equal(dx, [[[[0.0, 10.0], [0.0, 0.0]]]])


# ---------------------------------------------------------------------------
# cross-backend agreement


@pytest.mark.skipif(_numba_backend is None, reason="numba unavailable")
def test_backends_agree():
    rng = make_rng(16)
    x = rng.standard_normal((4, 3, 12, 11))
    filters = rng.standard_normal((5, 3, 4, 3))
    biases = rng.standard_normal(5)
    z_np = _numpy_backend.conv_forward(x, filters, biases)
    z_nb = _numba_backend.conv_forward(x, filters, biases)
    npt.assert_allclose(z_np, z_nb, rtol=1e-10, atol=1e-12)

    d_out = rng.standard_normal(z_np.shape)
    for a, b in zip(
        _numpy_backend.conv_backward(x, filters, d_out),
        _numba_backend.conv_backward(x, filters, d_out),
    ):
        npt.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    p_np, i_np = _numpy_backend.maxpool_forward(z_np)
    p_nb, i_nb = _numba_backend.maxpool_forward(z_np)
    npt.assert_array_equal(p_np, p_nb)
    npt.assert_array_equal(np.asarray(i_np, np.int64), np.asarray(i_nb, np.int64))

    g = rng.standard_normal(p_np.shape)
    npt.assert_array_equal(
        _numpy_backend.maxpool_backward(g, i_np, z_np.shape[2], z_np.shape[3]),
        _numba_backend.maxpool_backward(g, i_nb, z_np.shape[2], z_np.shape[3]),
    )


def test_numpy_backend_chunking_invariant():
    # force tiny column buffers so the batch is processed in many chunks
    rng = make_rng(17)
    x = rng.standard_normal((7, 2, 8, 8))
    filters = rng.standard_normal((3, 2, 3, 3))
    biases = rng.standard_normal(3)
    whole = _numpy_backend.conv_forward(x, filters, biases)
    saved = _numpy_backend.COL_BUFFER_BYTES
    try:
        _numpy_backend.COL_BUFFER_BYTES = 1  # one sample per chunk
        chunked = _numpy_backend.conv_forward(x, filters, biases)
        d_out = rng.standard_normal(whole.shape)
        grads_chunked = _numpy_backend.conv_backward(x, filters, d_out)
    finally:
        _numpy_backend.COL_BUFFER_BYTES = saved
    grads_whole = _numpy_backend.conv_backward(x, filters, d_out)
    npt.assert_array_equal(whole, chunked)
    for a, b in zip(grads_whole, grads_chunked):
        npt.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# backend selection flag


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("MEBAUTH_KERNELS", None)
    else:
        env["MEBAUTH_KERNELS"] = env_value
    code = (
        "from mebauth.kernels import backend_name\n"
        "print(backend_name())\n"
    )
    return subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )


def test_env_flag_selects_numpy():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"


def test_env_flag_auto_picks_a_backend():
    proc = _backend_in_subprocess("auto")
    assert proc.returncode == 0
    assert proc.stdout.strip() in ("numpy", "numba")


def test_env_flag_rejects_unknown_value():
    proc = _backend_in_subprocess("cuda")
    assert proc.returncode != 0
    assert "MEBAUTH_KERNELS" in proc.stderr

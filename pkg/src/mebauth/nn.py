"""From-scratch convolutional network: forward, backward, SGD training.

The architecture is a fixed topology with configurable sizes:

    conv -> relu -> pool -> conv -> relu -> pool
         -> flatten -> fc -> relu -> dropout -> fc -> relu -> dropout
         -> output -> sigmoid

Convolutions are valid cross-correlation (stride 1, no padding, no
kernel flip); pooling is 2x2 non-overlapping with trailing odd
rows/columns dropped. Activation tensors use (maps, rows, cols) layout,
flattened in C order before the dense stack. All arithmetic is float64.

Training minimizes binary cross-entropy between the sigmoid outputs and
the K-bit code assigned to each sample's user, by minibatch SGD with
classical momentum. Every random draw (shuffling, dropout) comes from
an explicit generator, so a fixed seed and configuration reproduce the
trajectory bit-for-bit on the active kernel backend.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from mebauth import kernels
from mebauth.errors import ConfigError, FormatError, ShapeError

PARAMS_MAGIC = b"MEBNETV1"

# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class NetArch:
    """Sizes of the conv/pool/dense stack; K is the output code length."""

    input_size: int = 64
    conv1_filters: int = 32
    conv1_fsize: tuple[int, int] = (7, 7)
    conv2_filters: int = 64
    conv2_fsize: tuple[int, int] = (7, 7)
    fc1_units: int = 2000
    fc2_units: int = 2000
    code_bits: int = 256
    dropout_p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        for name in ("input_size", "conv1_filters", "conv2_filters", "fc1_units",
                     "fc2_units", "code_bits"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        self.conv1_fsize = tuple(self.conv1_fsize)
        self.conv2_fsize = tuple(self.conv2_fsize)
        self.shape_chain()  # validates spatial dims

    def shape_chain(self) -> list[tuple[int, ...]]:
        """Activation shapes layer by layer, ending with (K,)."""
        m = self.input_size
        chain: list[tuple[int, ...]] = [(1, m, m)]
        h = w = m
        for nf, (f1, f2) in (
            (self.conv1_filters, self.conv1_fsize),
            (self.conv2_filters, self.conv2_fsize),
        ):
            if f1 > h or f2 > w:
                raise ShapeError(f"filter {f1}x{f2} larger than input {h}x{w}")
            h, w = h - f1 + 1, w - f2 + 1
            chain.append((nf, h, w))
            if h < 2 or w < 2:
                raise ShapeError(f"pooling needs spatial dims >= 2, got {h}x{w}")
            h, w = h // 2, w // 2
            chain.append((nf, h, w))
        chain.append((self.conv2_filters * h * w,))
        chain.append((self.fc1_units,))
        chain.append((self.fc2_units,))
        chain.append((self.code_bits,))
        return chain

    @property
    def flat_units(self) -> int:
        return self.shape_chain()[-4][0]

    @classmethod
    def reference(cls, code_bits: int = 256) -> "NetArch":
        """The reference 64x64 architecture: 32@7x7, 64@7x7, fc 2000/2000."""
        return cls(code_bits=code_bits)


@dataclass
class ConvLayerParams:
    filters: np.ndarray  # (out_maps, in_maps, f1, f2)
    biases: np.ndarray  # (out_maps,)


@dataclass
class DenseLayerParams:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)


@dataclass
class NetworkParams:
    conv1: ConvLayerParams
    conv2: ConvLayerParams
    fc1: DenseLayerParams
    fc2: DenseLayerParams
    out: DenseLayerParams
    arch: NetArch

    def layers(self):
        return (self.conv1, self.conv2, self.fc1, self.fc2, self.out)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in serialization order."""
        out = []
        for layer in self.layers():
            if isinstance(layer, ConvLayerParams):
                out += [layer.filters, layer.biases]
            else:
                out += [layer.weights, layer.biases]
        return out


def init_params(arch: NetArch, rng: np.random.Generator) -> NetworkParams:
    """Uniform(-a, a) weights with a = sqrt(6 / fan_in); zero biases."""

    def uni(fan_in, shape):
        a = np.sqrt(6.0 / fan_in)
        return rng.uniform(-a, a, size=shape)

    f1h, f1w = arch.conv1_fsize
    f2h, f2w = arch.conv2_fsize
    conv1 = ConvLayerParams(
        filters=uni(1 * f1h * f1w, (arch.conv1_filters, 1, f1h, f1w)),
        biases=np.zeros(arch.conv1_filters),
    )
    conv2 = ConvLayerParams(
        filters=uni(
            arch.conv1_filters * f2h * f2w,
            (arch.conv2_filters, arch.conv1_filters, f2h, f2w),
        ),
        biases=np.zeros(arch.conv2_filters),
    )
    flat = arch.flat_units
    fc1 = DenseLayerParams(uni(flat, (arch.fc1_units, flat)), np.zeros(arch.fc1_units))
    fc2 = DenseLayerParams(
        uni(arch.fc1_units, (arch.fc2_units, arch.fc1_units)), np.zeros(arch.fc2_units)
    )
    out = DenseLayerParams(
        uni(arch.fc2_units, (arch.code_bits, arch.fc2_units)), np.zeros(arch.code_bits)
    )
    return NetworkParams(conv1, conv2, fc1, fc2, out, arch)


# ---------------------------------------------------------------------------
# elementary operations


def conv_forward(x: np.ndarray, params: ConvLayerParams) -> np.ndarray:
    """Valid cross-correlation of a (d, h, w) tensor; returns pre-activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (maps, rows, cols) input, got shape {x.shape}")
    if x.shape[0] != params.filters.shape[1]:
        raise ShapeError(
            f"input has {x.shape[0]} maps, filter bank expects {params.filters.shape[1]}"
        )
    if x.shape[1] < params.filters.shape[2] or x.shape[2] < params.filters.shape[3]:
        raise ShapeError("input spatial dims smaller than filter")
    return kernels.conv_forward(x[None], params.filters, params.biases)[0]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def maxpool_forward(x: np.ndarray):
    """2x2/stride-2 max pool of a (d, h, w) tensor: (pooled, argmax indices)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (maps, rows, cols) input, got shape {x.shape}")
    if x.shape[1] < 2 or x.shape[2] < 2:
        raise ShapeError(f"pooling needs spatial dims >= 2, got {x.shape[1]}x{x.shape[2]}")
    out, idx = kernels.maxpool_forward(x[None])
    return out[0], idx[0]


def dense_forward(x: np.ndarray, params: DenseLayerParams) -> np.ndarray:
    """W @ x + b, pre-activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.weights.shape[1],):
        raise ShapeError(
            f"input length {x.shape} does not match layer in_dim {params.weights.shape[1]}"
        )
    return params.weights @ x + params.biases


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic, stable for arbitrarily large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax (baseline classification head)."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


LOG_EPS = 1e-12


def bce_loss(t: np.ndarray, code_bits: np.ndarray) -> float:
    """Binary cross-entropy, summed over bits; t clamped to [eps, 1-eps]."""
    t = np.asarray(t, dtype=np.float64)
    c = np.asarray(code_bits, dtype=np.float64)
    if t.shape != c.shape:
        raise ShapeError(f"output length {t.shape} != code length {c.shape}")
    tc = np.clip(t, LOG_EPS, 1.0 - LOG_EPS)
    return float(-np.sum(c * np.log(tc) + (1.0 - c) * np.log(1.0 - tc)))


def ce_loss(t: np.ndarray, y: np.ndarray) -> float:
    """Cross-entropy against a one-hot target, summed, clamped like bce_loss."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape:
        raise ShapeError(f"output length {t.shape} != target length {y.shape}")
    return float(-np.sum(y * np.log(np.clip(t, LOG_EPS, 1.0 - LOG_EPS))))


def dropout(x: np.ndarray, p: float, rng: np.random.Generator, train: bool):
    """Inverted dropout: survivors scaled by 1/(1-p); identity at inference.

    Returns (output, mask); the mask already carries the 1/(1-p) scale,
    and is None at inference.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    x = np.asarray(x, dtype=np.float64)
    if not train:
        return x, None
    if p == 0.0:
        return x.copy(), np.ones_like(x)
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


# ---------------------------------------------------------------------------
# full-network forward / backward


@dataclass
class ForwardTrace:
    """Cached activations of one forward pass, as needed for backprop.

    Arrays are batched (leading batch axis). Dropout masks are None when
    dropout was bypassed (inference, p = 0, or a gradient-check pass).
    """

    x0: np.ndarray
    z1: np.ndarray
    idx1: np.ndarray
    a1p: np.ndarray
    z2: np.ndarray
    idx2: np.ndarray
    a2p_flat: np.ndarray
    zf1: np.ndarray
    af1: np.ndarray
    mask1: np.ndarray | None
    zf2: np.ndarray
    af2: np.ndarray
    mask2: np.ndarray | None
    t: np.ndarray
    train: bool


def _forward_batch(
    x: np.ndarray,
    params: NetworkParams,
    train: bool,
    rng: np.random.Generator | None,
    use_dropout: bool = True,
):
    """Batched pipeline on (B, 1, m, m) input. Returns (t, trace | None).

    The trace is kept only in train mode. use_dropout=False runs train
    mode without dropout (used by gradient_check).
    """
    arch = params.arch
    b = x.shape[0]
    z1 = kernels.conv_forward(x, params.conv1.filters, params.conv1.biases)
    a1 = np.maximum(z1, 0.0)
    a1p, idx1 = kernels.maxpool_forward(a1)
    z2 = kernels.conv_forward(a1p, params.conv2.filters, params.conv2.biases)
    a2 = np.maximum(z2, 0.0)
    a2p, idx2 = kernels.maxpool_forward(a2)
    a2p_flat = a2p.reshape(b, -1)

    zf1 = a2p_flat @ params.fc1.weights.T + params.fc1.biases
    af1 = np.maximum(zf1, 0.0)
    mask1 = None
    if train and use_dropout and arch.dropout_p > 0.0:
        mask1 = (rng.random(af1.shape) >= arch.dropout_p) / (1.0 - arch.dropout_p)
        af1 = af1 * mask1

    zf2 = af1 @ params.fc2.weights.T + params.fc2.biases
    af2 = np.maximum(zf2, 0.0)
    mask2 = None
    if train and use_dropout and arch.dropout_p > 0.0:
        mask2 = (rng.random(af2.shape) >= arch.dropout_p) / (1.0 - arch.dropout_p)
        af2 = af2 * mask2

    zo = af2 @ params.out.weights.T + params.out.biases
    t = sigmoid(zo)

    if not train:
        return t, None
    trace = ForwardTrace(
        x0=x, z1=z1, idx1=idx1, a1p=a1p, z2=z2, idx2=idx2, a2p_flat=a2p_flat,
        zf1=zf1, af1=af1, mask1=mask1, zf2=zf2, af2=af2, mask2=mask2, t=t, train=True,
    )
    return t, trace


def network_forward(
    image: np.ndarray,
    params: NetworkParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Run one image through the network. Returns (t, trace).

    image is (m, m) or (1, m, m) with m = arch.input_size; trace is None
    in inference mode.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    m = params.arch.input_size
    if image.shape != (1, m, m):
        raise ShapeError(f"expected 1x{m}x{m} input, got {image.shape}")
    if train and params.arch.dropout_p > 0.0 and rng is None:
        raise ConfigError("train-mode forward with dropout requires an rng")
    t, trace = _forward_batch(image[None], params, train, rng)
    return t[0], trace


def _backward_batch(trace: ForwardTrace, codes: np.ndarray, params: NetworkParams):
    """Gradients of summed (over the batch) BCE loss w.r.t. every parameter."""
    dzo = trace.t - codes  # (B, K)
    g_out_w = dzo.T @ trace.af2
    g_out_b = dzo.sum(axis=0)
    daf2 = dzo @ params.out.weights
    if trace.mask2 is not None:
        daf2 = daf2 * trace.mask2
    dzf2 = daf2 * (trace.zf2 > 0)
    g_fc2_w = dzf2.T @ trace.af1
    g_fc2_b = dzf2.sum(axis=0)
    daf1 = dzf2 @ params.fc2.weights
    if trace.mask1 is not None:
        daf1 = daf1 * trace.mask1
    dzf1 = daf1 * (trace.zf1 > 0)
    g_fc1_w = dzf1.T @ trace.a2p_flat
    g_fc1_b = dzf1.sum(axis=0)
    da2p = (dzf1 @ params.fc1.weights).reshape(
        trace.z2.shape[0], trace.z2.shape[1], trace.z2.shape[2] // 2, trace.z2.shape[3] // 2
    )
    da2 = kernels.maxpool_backward(da2p, trace.idx2, trace.z2.shape[2], trace.z2.shape[3])
    dz2 = da2 * (trace.z2 > 0)
    da1p, g_c2_f, g_c2_b = kernels.conv_backward(trace.a1p, params.conv2.filters, dz2, True)
    da1 = kernels.maxpool_backward(da1p, trace.idx1, trace.z1.shape[2], trace.z1.shape[3])
    dz1 = da1 * (trace.z1 > 0)
    _, g_c1_f, g_c1_b = kernels.conv_backward(trace.x0, params.conv1.filters, dz1, False)
    return NetworkParams(
        conv1=ConvLayerParams(g_c1_f, g_c1_b),
        conv2=ConvLayerParams(g_c2_f, g_c2_b),
        fc1=DenseLayerParams(g_fc1_w, g_fc1_b),
        fc2=DenseLayerParams(g_fc2_w, g_fc2_b),
        out=DenseLayerParams(g_out_w, g_out_b),
        arch=params.arch,
    )


def network_backward(
    trace: ForwardTrace, target_bits: np.ndarray, params: NetworkParams
) -> NetworkParams:
    """Exact gradient of bce_loss(network_forward(x), target) for one sample."""
    if trace is None or not trace.train:
        raise ShapeError("backward requires a train-mode trace")
    codes = np.asarray(target_bits, dtype=np.float64)
    if codes.shape != (params.arch.code_bits,):
        raise ShapeError(
            f"target has length {codes.shape}, network K = {params.arch.code_bits}"
        )
    return _backward_batch(trace, codes[None], params)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 200
    lr: float = 0.01
    momentum: float = 0.9
    # memory knob: a batch is processed in chunks of this many samples;
    # gradients accumulate in fixed chunk order, so results depend on it
    # only at the floating-point level.
    chunk_size: int = 64

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")


def _stack_batch(dataset, indices, codebook, k):
    imgs = np.stack([np.asarray(dataset[i][1], dtype=np.float64) for i in indices])
    codes = np.stack(
        [codebook.codes[dataset[i][0]].bits.astype(np.float64) for i in indices]
    )
    return imgs[:, None, :, :], codes


def sgd_train(
    dataset,
    codebook,
    config: TrainConfig,
    rng: np.random.Generator,
    arch: NetArch | None = None,
    params: NetworkParams | None = None,
    val_dataset=None,
    progress=None,
):
    """Minibatch SGD with momentum on BCE against per-user codes.

    dataset: sequence of (user_id, image) pairs, images (m, m) in [0, 1],
    already augmented and normalized. Every user_id must be present in
    the codebook. Fresh parameters are initialized from ``arch`` (the
    reference architecture at the codebook's K when omitted) using the
    same rng, so a fixed seed reproduces the whole trajectory; pass
    ``params`` instead to continue training existing weights in place.
    Returns (params, history) where history maps 'train_loss' (and
    'val_loss' when val_dataset is given) to per-epoch mean per-sample
    losses. progress, if given, is called after every epoch as
    progress(epoch, total_epochs, train_loss, val_loss_or_None).
    """
    n = len(dataset)
    if n == 0:
        raise ConfigError("training dataset is empty")
    if params is None:
        if arch is None:
            arch = NetArch.reference(code_bits=codebook.k)
        params = init_params(arch, rng)
    k = params.arch.code_bits
    if codebook.k != k:
        raise ShapeError(f"codebook K={codebook.k} but network K={k}")
    for user_id, _ in dataset:
        if user_id not in codebook.codes:
            raise ShapeError(f"no code for user {user_id!r} in codebook")

    velocity = [np.zeros_like(a) for a in params.arrays()]
    history: dict[str, list[float]] = {"train_loss": []}
    if val_dataset is not None:
        history["val_loss"] = []

    for _epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = perm[start : start + config.batch_size]
            bsz = len(batch_idx)
            grad_sum = None
            for cs in range(0, bsz, config.chunk_size):
                chunk_idx = batch_idx[cs : cs + config.chunk_size]
                x, codes = _stack_batch(dataset, chunk_idx, codebook, k)
                t, trace = _forward_batch(x, params, True, rng)
                tc = np.clip(t, LOG_EPS, 1.0 - LOG_EPS)
                epoch_loss += float(
                    -np.sum(codes * np.log(tc) + (1.0 - codes) * np.log(1.0 - tc))
                )
                g = _backward_batch(trace, codes, params)
                if grad_sum is None:
                    grad_sum = g.arrays()
                else:
                    for acc, arr in zip(grad_sum, g.arrays()):
                        acc += arr
            for p_arr, v_arr, g_arr in zip(params.arrays(), velocity, grad_sum):
                v_arr *= config.momentum
                v_arr -= config.lr * (g_arr / bsz)
                p_arr += v_arr
        history["train_loss"].append(epoch_loss / n)
        val_loss = None
        if val_dataset is not None:
            val_loss = _mean_loss(val_dataset, codebook, params)
            history["val_loss"].append(val_loss)
        if progress is not None:
            progress(_epoch, config.epochs, history["train_loss"][-1], val_loss)
    return params, history


def _mean_loss(dataset, codebook, params, chunk=64):
    total = 0.0
    for cs in range(0, len(dataset), chunk):
        idx = range(cs, min(cs + chunk, len(dataset)))
        x, codes = _stack_batch(dataset, idx, codebook, params.arch.code_bits)
        t, _ = _forward_batch(x, params, False, None)
        tc = np.clip(t, LOG_EPS, 1.0 - LOG_EPS)
        total += float(-np.sum(codes * np.log(tc) + (1.0 - codes) * np.log(1.0 - tc)))
    return total / len(dataset)


# ---------------------------------------------------------------------------
# gradient checking


def random_tiny_arch(rng: np.random.Generator) -> NetArch:
    """Small random architecture whose shape chain is valid.

    Meant for gradient checking, where cost grows with parameter count;
    draws until the sampled filter sizes fit the sampled input.
    """
    while True:
        try:
            return NetArch(
                input_size=int(rng.integers(8, 13)),
                conv1_filters=int(rng.integers(1, 3)),
                conv1_fsize=(int(rng.integers(2, 4)),) * 2,
                conv2_filters=int(rng.integers(1, 3)),
                conv2_fsize=(int(rng.integers(2, 4)),) * 2,
                fc1_units=int(rng.integers(2, 7)),
                fc2_units=int(rng.integers(2, 7)),
                code_bits=int(rng.integers(2, 9)),
                dropout_p=0.5,
            )
        except ShapeError:  # sampled filters do not fit; draw again
            continue


def gradient_check_params(arch: NetArch, rng: np.random.Generator) -> NetworkParams:
    """Parameters at a generic point for gradient checking.

    Fresh weights with the biases jittered off zero: with zero biases a
    dead upstream layer parks pre-activations exactly on the relu kink,
    where central differences straddle the corner and disagree with the
    (one-sided) analytic derivative. Nonzero biases make that a
    measure-zero event.
    """
    params = init_params(arch, rng)
    for layer in params.layers():
        b = layer.biases
        b += rng.uniform(0.05, 0.2, size=b.shape) * rng.choice([-1.0, 1.0], size=b.shape)
    return params


def gradient_check(
    params: NetworkParams,
    sample: np.ndarray,
    target_bits: np.ndarray,
    eps: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is bypassed (its mask would change under perturbation); the
    check covers conv, pooling, the dense stack, sigmoid, and the loss.
    Intended for tiny architectures: cost is two forward passes per
    parameter.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim == 2:
        sample = sample[None]
    target = np.asarray(target_bits, dtype=np.float64)

    def loss_now() -> float:
        t, _ = _forward_batch(sample[None], params, False, None)
        return bce_loss(t[0], target)

    _, trace = _forward_batch(sample[None], params, True, None, use_dropout=False)
    analytic = _backward_batch(trace, target[None], params).arrays()

    worst = 0.0
    for p_arr, g_arr in zip(params.arrays(), analytic):
        for i in range(p_arr.size):
            orig = p_arr.flat[i]
            p_arr.flat[i] = orig + eps
            up = loss_now()
            p_arr.flat[i] = orig - eps
            down = loss_now()
            p_arr.flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            g = g_arr.flat[i]
            err = abs(g - numeric) / max(abs(g) + abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# serialization


def save_params(params: NetworkParams, path) -> None:
    """Versioned binary dump: magic, architecture header, float64 LE arrays."""
    a = params.arch
    header = struct.pack(
        "<10I d",
        a.input_size,
        a.conv1_filters, a.conv1_fsize[0], a.conv1_fsize[1],
        a.conv2_filters, a.conv2_fsize[0], a.conv2_fsize[1],
        a.fc1_units, a.fc2_units, a.code_bits,
        a.dropout_p,
    )
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(header)
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(PARAMS_MAGIC):
        raise FormatError(f"{path}: not a network parameter file")
    off = len(PARAMS_MAGIC)
    head_fmt = "<10I d"
    head_size = struct.calcsize(head_fmt)
    if len(blob) < off + head_size:
        raise FormatError(f"{path}: truncated header")
    vals = struct.unpack_from(head_fmt, blob, off)
    off += head_size
    arch = NetArch(
        input_size=vals[0],
        conv1_filters=vals[1], conv1_fsize=(vals[2], vals[3]),
        conv2_filters=vals[4], conv2_fsize=(vals[5], vals[6]),
        fc1_units=vals[7], fc2_units=vals[8], code_bits=vals[9],
        dropout_p=vals[10],
    )
    rng = np.random.Generator(np.random.PCG64(0))
    params = init_params(arch, rng)  # shapes only; data overwritten below
    for arr in params.arrays():
        nbytes = arr.size * 8
        if len(blob) < off + nbytes:
            raise FormatError(f"{path}: truncated parameter payload")
        arr[...] = np.frombuffer(blob[off : off + nbytes], dtype="<f8").reshape(arr.shape)
        off += nbytes
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    return params

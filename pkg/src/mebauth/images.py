"""Image I/O, resizing, and the crop/flip augmentation pipeline.

Images are float64 arrays of shape (rows, cols) with intensities in
[0, 1]. File I/O speaks binary PGM (P5, 8-bit): header `P5`, optional
`#` comments, width/height, maxval <= 255, then one raw byte per pixel
in row-major order.

Augmentation extracts every n x n crop of an m x m image in row-major
origin order, optionally follows each crop with its horizontal flip,
and resizes each crop back to m x m. Illumination normalization is a
three-stage chain (gamma, difference-of-Gaussians, trimmed contrast
equalization with tanh squashing) applied per crop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mebauth.errors import ConfigError, FormatError


@dataclass
class AugmentConfig:
    """Working size m, crop size n, and whether flips are emitted."""

    m: int = 64
    n: int = 57
    flip: bool = True

    def __post_init__(self):
        if not 1 <= self.n <= self.m:
            raise ConfigError(f"need 1 <= n <= m, got n={self.n}, m={self.m}")

    @property
    def crop_count(self) -> int:
        side = self.m - self.n + 1
        return (2 if self.flip else 1) * side * side


# ---------------------------------------------------------------------------
# PGM I/O


def _read_header_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines
    n = len(blob)
    while pos < n:
        ch = blob[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < n and blob[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not blob[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return blob[start:pos], pos


def load_image(path) -> np.ndarray:
    """Read a binary PGM (P5) file into a [0, 1] float image."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_header_token(blob, pos)
        if not tok.isdigit():
            raise FormatError(f"{path}: malformed PGM header token {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise FormatError(f"{path}: maxval {maxval} outside 8-bit range")
    pos += 1  # single whitespace byte after maxval
    payload = blob[pos : pos + width * height]
    if len(payload) != width * height:
        raise FormatError(f"{path}: truncated pixel payload")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return data.astype(np.float64) / float(maxval)


def save_image(image: np.ndarray, path) -> None:
    """Write a [0, 1] float image as binary PGM with maxval 255."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise FormatError(f"expected a 2-D image, got shape {image.shape}")
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


# ---------------------------------------------------------------------------
# geometric ops


def resize(image: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize to target x target (pixel-center alignment).

    Source coordinate of output pixel i is (i + 0.5) * size/target - 0.5,
    clamped to the valid range; exact identity when already the target
    size.
    """
    if target < 1:
        raise ConfigError(f"target size must be >= 1, got {target}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    if (h, w) == (target, target):
        return image.copy()

    def axis_coords(src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(target) + 0.5) * (src / target) - 0.5
        pos = np.clip(pos, 0.0, src - 1.0)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, pos - lo

    r0, r1, rf = axis_coords(h)
    c0, c1, cf = axis_coords(w)
    top = image[r0][:, c0] * (1 - cf) + image[r0][:, c1] * cf
    bot = image[r1][:, c0] * (1 - cf) + image[r1][:, c1] * cf
    return top * (1 - rf[:, None]) + bot * rf[:, None]


def hflip(image: np.ndarray) -> np.ndarray:
    """Reverse column order (mirror about the vertical axis)."""
    return np.asarray(image, dtype=np.float64)[:, ::-1].copy()


def crops_all(image: np.ndarray, cfg: AugmentConfig) -> list[np.ndarray]:
    """All n x n crops (row-major origin order), each resized back to m x m.

    With cfg.flip, each crop's horizontal flip immediately follows it;
    flipping happens on the crop, before the resize. Output length is
    cfg.crop_count.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (cfg.m, cfg.m):
        raise ConfigError(f"expected a {cfg.m}x{cfg.m} image, got {image.shape}")
    side = cfg.m - cfg.n + 1
    out = []
    for r in range(side):
        for c in range(side):
            crop = image[r : r + cfg.n, c : c + cfg.n]
            out.append(resize(crop, cfg.m))
            if cfg.flip:
                out.append(resize(hflip(crop), cfg.m))
    return out


# ---------------------------------------------------------------------------
# illumination normalization


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(4.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def _blur(batch: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflective borders; batch is (..., h, w)."""
    k = _gaussian_kernel(sigma)
    radius = k.size // 2

    def convolve_last(arr):
        # contiguous input keeps the pad and the shifted adds cache-friendly
        arr = np.ascontiguousarray(arr)
        padded = np.pad(arr, [(0, 0)] * (arr.ndim - 1) + [(radius, radius)], mode="reflect")
        out = np.zeros_like(arr)
        for i, weight in enumerate(k):
            out += weight * padded[..., i : i + arr.shape[-1]]
        return out

    blurred = convolve_last(batch)  # along cols
    blurred = convolve_last(np.swapaxes(blurred, -1, -2))  # along rows
    return np.swapaxes(blurred, -1, -2)


_DOG_KERNEL_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _dog(batch: np.ndarray) -> np.ndarray:
    """Difference of Gaussians, equal to _blur(x, inner) - _blur(x, outer).

    One FFT round-trip with a cached kernel spectrum; the reflect pad
    is wide enough (outer radius) that circular wrap-around never
    reaches the cropped-out center, so this matches the separable
    per-axis blurs to floating-point accuracy.
    """
    k1 = _gaussian_kernel(DOG_SIGMA_INNER)
    k2 = _gaussian_kernel(DOG_SIGMA_OUTER)
    radius = k2.size // 2
    h, w = batch.shape[-2], batch.shape[-1]
    ph, pw = h + 2 * radius, w + 2 * radius

    spectrum = _DOG_KERNEL_CACHE.get((ph, pw))
    if spectrum is None:
        pad1 = (k2.size - k1.size) // 2
        dog = np.outer(k2, k2) * -1.0
        dog[pad1 : pad1 + k1.size, pad1 : pad1 + k1.size] += np.outer(k1, k1)
        kern = np.zeros((ph, pw))
        kern[: k2.size, : k2.size] = dog
        kern = np.roll(kern, (-radius, -radius), axis=(0, 1))
        spectrum = np.fft.rfft2(kern)
        _DOG_KERNEL_CACHE[(ph, pw)] = spectrum

    padded = np.pad(
        batch, [(0, 0)] * (batch.ndim - 2) + [(radius, radius)] * 2, mode="reflect"
    )
    out = np.fft.irfft2(np.fft.rfft2(padded) * spectrum, s=(ph, pw))
    return out[..., radius : radius + h, radius : radius + w]


GAMMA = 0.2
DOG_SIGMA_INNER = 1.0
DOG_SIGMA_OUTER = 2.0
CONTRAST_ALPHA = 0.1
CONTRAST_TAU = 10.0


def illum_normalize(image: np.ndarray) -> np.ndarray:
    """Gamma -> difference of Gaussians -> contrast equalization -> [0, 1].

    Deterministic chain with fixed constants: gamma 0.2; DoG sigmas
    1.0/2.0 with reflective borders; two-pass trimmed power
    normalization (alpha 0.1, tau 10) with final tanh squashing; then a
    min-max rescale. Constant inputs map to a constant 0.5 image.
    Accepts a single image or a batch with leading axes.
    """
    x = np.asarray(image, dtype=np.float64)
    x = np.power(np.maximum(x, 0.0), GAMMA)
    x = _dog(x)

    axes = (-2, -1)

    def trimmed_norm(v, trim):
        mean_pow = np.mean(np.power(np.minimum(np.abs(v), trim), CONTRAST_ALPHA),
                           axis=axes, keepdims=True)
        denom = np.power(mean_pow, 1.0 / CONTRAST_ALPHA)
        return v / np.where(denom > 1e-12, denom, 1.0)  # constant (all-zero) images pass through

    x = trimmed_norm(x, np.inf)
    x = trimmed_norm(x, CONTRAST_TAU)
    x = CONTRAST_TAU * np.tanh(x / CONTRAST_TAU)

    lo = x.min(axis=axes, keepdims=True)
    hi = x.max(axis=axes, keepdims=True)
    span = hi - lo
    flat = span < 1e-12
    x = np.where(flat, 0.5, (x - lo) / np.where(flat, 1.0, span))
    return x

"""Verification and identification by crop voting.

A probe image is expanded into its augmented crops; each crop runs
through the network, is binarized at 0.5, packed, and hashed. The score
against a user is the fraction of crop digests that equal the stored
template exactly - one flipped bit anywhere zeroes a crop's vote. The
value is kept as an exact rational (matches / total).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from mebauth.codes import MebCode
from mebauth.errors import ShapeError
from mebauth.images import AugmentConfig, crops_all, illum_normalize
from mebauth.nn import NetworkParams, _forward_batch
from mebauth.vault import Vault


@dataclass(frozen=True)
class MatchScore:
    matches: int
    total: int

    def __post_init__(self):
        if self.total < 1:
            raise ShapeError(f"need at least one vote, got total={self.total}")
        if not 0 <= self.matches <= self.total:
            raise ShapeError(f"need 0 <= matches <= total, got {self.matches}/{self.total}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.matches, self.total)

    def __float__(self) -> float:
        return self.matches / self.total

    def __str__(self) -> str:
        return f"{self.matches}/{self.total}"


@dataclass(frozen=True)
class VerifyResult:
    user_id: str
    score: MatchScore
    threshold: float
    accept: bool


def binarize(t: np.ndarray) -> MebCode:
    """Threshold network outputs at 0.5, strictly: t == 0.5 maps to bit 0."""
    t = np.asarray(t, dtype=np.float64)
    return MebCode((t > 0.5).astype(np.uint8))


def crop_digests(
    sample: np.ndarray,
    params: NetworkParams,
    cfg: AugmentConfig,
    batch_size: int = 64,
) -> list[bytes]:
    """Digest of the binarized network output for every augmented crop."""
    sample = np.asarray(sample, dtype=np.float64)
    if sample.shape != (cfg.m, cfg.m):
        raise ShapeError(f"expected a {cfg.m}x{cfg.m} sample, got {sample.shape}")
    if params.arch.input_size != cfg.m:
        raise ShapeError(
            f"network expects {params.arch.input_size}x{params.arch.input_size}, cfg.m={cfg.m}"
        )
    crops = np.stack(crops_all(sample, cfg))
    crops = illum_normalize(crops)
    digests: list[bytes] = []
    for s in range(0, crops.shape[0], batch_size):
        chunk = crops[s : s + batch_size]
        t, _ = _forward_batch(chunk[:, None, :, :], params, False, None)
        packed = np.packbits(t > 0.5, axis=1)
        for row in packed:
            digests.append(hashlib.sha512(row.tobytes()).digest())
    return digests


def score_verify(
    sample: np.ndarray,
    user_id: str,
    params: NetworkParams,
    vault: Vault,
    cfg: AugmentConfig,
) -> MatchScore:
    """Crop-voting score of a probe against one enrolled template."""
    template = vault.get(user_id)
    if template.k != params.arch.code_bits:
        raise ShapeError(
            f"template K={template.k} but network K={params.arch.code_bits}"
        )
    digests = crop_digests(sample, params, cfg)
    matches = sum(1 for d in digests if d == template.digest)
    return MatchScore(matches, len(digests))


def identify(
    sample: np.ndarray,
    params: NetworkParams,
    vault: Vault,
    cfg: AugmentConfig,
) -> list[tuple[str, MatchScore]]:
    """Score the probe against every template; best score first.

    Crop digests are computed once. Ties sort by user id ascending.
    """
    if len(vault) == 0:
        raise ShapeError("vault is empty")
    digests = crop_digests(sample, params, cfg)
    results = []
    for uid in sorted(vault.templates):
        tpl = vault.templates[uid]
        matches = sum(1 for d in digests if d == tpl.digest)
        results.append((uid, MatchScore(matches, len(digests))))
    results.sort(key=lambda item: (-item[1].value, item[0]))
    return results


def decide(score: MatchScore, threshold: float) -> bool:
    """Accept iff score >= threshold (so threshold 1.0 stays reachable)."""
    if not 0.0 <= threshold <= 1.0:
        raise ShapeError(f"threshold must be in [0, 1], got {threshold}")
    return score.value >= threshold


def verify(
    sample: np.ndarray,
    user_id: str,
    params: NetworkParams,
    vault: Vault,
    cfg: AugmentConfig,
    threshold: float,
) -> VerifyResult:
    score = score_verify(sample, user_id, params, vault, cfg)
    return VerifyResult(user_id, score, threshold, decide(score, threshold))

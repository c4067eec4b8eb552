"""Maximum-entropy binary codes and per-user codebooks.

Codes are K independent fair coin flips: they carry no information
about any image, by construction (generation consumes only the length
and a generator). K is restricted to byte multiples so the packed form
hashed downstream is unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mebauth.errors import ConfigError, DuplicateUserError, FormatError, ShapeError

CODEBOOK_MAGIC = "MEBCODEBOOK v1"


def _check_k(k: int) -> None:
    if k < 8 or k % 8 != 0:
        raise ConfigError(f"code length must be a positive multiple of 8, got {k}")


@dataclass(frozen=True)
class MebCode:
    """K-bit code; bits is a uint8 array of 0/1 values."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        _check_k(bits.size)
        if bits.ndim != 1 or not np.all(bits <= 1):
            raise ConfigError("bits must be a 1-D array of 0/1 values")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def k(self) -> int:
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, MebCode):
            return NotImplemented
        return self.bits.size == other.bits.size and bool(np.all(self.bits == other.bits))

    def __hash__(self):
        return hash(self.bits.tobytes())


def generate_code(k: int, rng: np.random.Generator) -> MebCode:
    """K i.i.d. Bernoulli(0.5) bits."""
    _check_k(k)
    return MebCode(rng.integers(0, 2, size=k, dtype=np.uint8))


def hamming(a: MebCode, b: MebCode) -> int:
    """Number of differing bit positions."""
    if a.k != b.k:
        raise ShapeError(f"code lengths differ: {a.k} vs {b.k}")
    return int(np.count_nonzero(a.bits != b.bits))


def serialize_bits(code: MebCode) -> bytes:
    """Pack to K/8 bytes, MSB-first: bit j lands in byte j//8 at 7 - j%8."""
    return np.packbits(code.bits).tobytes()


def deserialize_bits(data: bytes, k: int) -> MebCode:
    """Inverse of serialize_bits."""
    _check_k(k)
    if len(data) != k // 8:
        raise FormatError(f"expected {k // 8} bytes for K={k}, got {len(data)}")
    return MebCode(np.unpackbits(np.frombuffer(data, dtype=np.uint8)))


@dataclass
class CodeBook:
    """user_id -> MebCode, all the same K, all pairwise distinct."""

    codes: dict[str, MebCode]
    k: int = field(init=False, default=0)

    def __post_init__(self):
        if not self.codes:
            raise ConfigError("codebook must contain at least one user")
        ks = {c.k for c in self.codes.values()}
        if len(ks) != 1:
            raise ConfigError(f"codes have mixed lengths: {sorted(ks)}")
        (self.k,) = ks
        if len({serialize_bits(c) for c in self.codes.values()}) != len(self.codes):
            raise ConfigError("codebook contains duplicate codes")

    def __len__(self):
        return len(self.codes)

    def __getitem__(self, user_id: str) -> MebCode:
        return self.codes[user_id]

    def user_ids(self) -> list[str]:
        return list(self.codes)


def generate_codebook(user_ids, k: int, rng: np.random.Generator) -> CodeBook:
    """One fresh code per user, in the given user order.

    On the astronomically unlikely duplicate draw, the colliding code is
    regenerated until distinct.
    """
    ids = list(user_ids)
    if len(set(ids)) != len(ids):
        raise DuplicateUserError("user ids must be unique")
    _check_k(k)
    if k < 64 and len(ids) > 2 ** (k - 1):
        # keep the regenerate-on-collision loop certain to terminate
        raise ConfigError(f"cannot draw {len(ids)} distinct codes of {k} bits")
    codes: dict[str, MebCode] = {}
    seen: set[bytes] = set()
    for uid in ids:
        code = generate_code(k, rng)
        while serialize_bits(code) in seen:
            code = generate_code(k, rng)
        seen.add(serialize_bits(code))
        codes[uid] = code
    return CodeBook(codes)


def export_codebook(book: CodeBook, path) -> None:
    """Enrollment-time text export: header, then `user_id<TAB>hex(bits)`.

    This file is the only place codes exist outside memory; it is meant
    to be deleted once enrollment (and training) has consumed it.
    """
    lines = [CODEBOOK_MAGIC]
    for uid in book.user_ids():
        if "\t" in uid or "\n" in uid:
            raise ConfigError(f"user id {uid!r} contains tab/newline")
        lines.append(f"{uid}\t{serialize_bits(book.codes[uid]).hex()}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_codebook(path) -> CodeBook:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: missing {CODEBOOK_MAGIC!r} header")
    codes: dict[str, MebCode] = {}
    for ln in lines[1:]:
        if not ln:
            continue
        try:
            uid, hexbits = ln.split("\t")
            raw = bytes.fromhex(hexbits)
        except ValueError as exc:
            raise FormatError(f"{path}: bad codebook line {ln!r}") from exc
        if uid in codes:
            raise FormatError(f"{path}: duplicate user {uid!r}")
        codes[uid] = deserialize_bits(raw, len(raw) * 8)
    return CodeBook(codes)

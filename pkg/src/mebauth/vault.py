"""Protected-template vault: SHA-512 digests of user codes, never the codes.

The stored template for a user is the SHA-512 digest of the packed code
bytes, with no salt: the code itself carries K bits of entropy, and the
digest is all an attacker holding the vault ever sees. Cancelation is a
reissue: draw a fresh code, overwrite the digest, bump the version (the
mapping network must then be retrained against the new code).

File format (text, line-oriented, LF):

    MEBVAULT v1
    user_id<TAB>K<TAB>version<TAB>created_at<TAB>hex_digest
    ...
    CRC32 <8 hex digits>

Entries are sorted by user id; created_at is integer epoch seconds; the
checksum covers every preceding byte of the file. A file that fails the
checksum, or any structural check, loads nothing.
"""

from __future__ import annotations

import hashlib
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from mebauth.codes import MebCode, serialize_bits
from mebauth.errors import DuplicateUserError, FormatError, UnknownUserError

VAULT_MAGIC = "MEBVAULT v1"
DIGEST_BYTES = 64


def hash_code(code: MebCode) -> bytes:
    """SHA-512 digest of the packed code bytes (64 bytes)."""
    return hashlib.sha512(serialize_bits(code)).digest()


@dataclass
class ProtectedTemplate:
    user_id: str
    digest: bytes
    k: int
    created_at: int
    code_version: int = 1

    def __post_init__(self):
        if len(self.digest) != DIGEST_BYTES:
            raise FormatError(f"digest must be {DIGEST_BYTES} bytes, got {len(self.digest)}")


@dataclass
class Vault:
    """At most one active template per user; never holds code bits."""

    templates: dict[str, ProtectedTemplate] = field(default_factory=dict)

    def __len__(self):
        return len(self.templates)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self.templates

    def get(self, user_id: str) -> ProtectedTemplate:
        try:
            return self.templates[user_id]
        except KeyError:
            raise UnknownUserError(f"user {user_id!r} is not enrolled") from None

    def enroll(
        self,
        user_id: str,
        code: MebCode,
        overwrite: bool = False,
        created_at: int | None = None,
    ) -> ProtectedTemplate:
        """Store the digest of ``code`` for ``user_id``; the code is not kept.

        Re-enrolling requires overwrite=True and increments the version.
        """
        if "\t" in user_id or "\n" in user_id:
            raise FormatError(f"user id {user_id!r} contains tab/newline")
        prior = self.templates.get(user_id)
        if prior is not None and not overwrite:
            raise DuplicateUserError(f"user {user_id!r} already enrolled")
        tpl = ProtectedTemplate(
            user_id=user_id,
            digest=hash_code(code),
            k=code.k,
            created_at=int(time.time()) if created_at is None else int(created_at),
            code_version=1 if prior is None else prior.code_version + 1,
        )
        self.templates[user_id] = tpl
        return tpl

    def reissue(
        self,
        user_id: str,
        k: int,
        rng: np.random.Generator,
        created_at: int | None = None,
    ) -> tuple[MebCode, ProtectedTemplate]:
        """Cancel and replace a user's code.

        Returns the fresh code (the caller needs it to retrain the
        mapping) and the new stored template; the old digest is gone.
        """
        from mebauth.codes import generate_code

        prior = self.get(user_id)
        code = generate_code(k, rng)
        tpl = ProtectedTemplate(
            user_id=user_id,
            digest=hash_code(code),
            k=k,
            created_at=int(time.time()) if created_at is None else int(created_at),
            code_version=prior.code_version + 1,
        )
        self.templates[user_id] = tpl
        return code, tpl


def persist(vault: Vault, path) -> None:
    """Write the versioned, checksummed vault file."""
    lines = [VAULT_MAGIC]
    for uid in sorted(vault.templates):
        t = vault.templates[uid]
        lines.append(f"{uid}\t{t.k}\t{t.code_version}\t{t.created_at}\t{t.digest.hex()}")
    body = ("\n".join(lines) + "\n").encode("utf-8")
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(f"CRC32 {crc:08x}\n".encode("ascii"))


def load(path) -> Vault:
    """Read a vault file back; checksum or format damage loads nothing."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.rfind(b"\n", 0, len(blob) - 1)
    body, tail = blob[: nl + 1], blob[nl + 1 :]
    if not tail.startswith(b"CRC32 "):
        raise FormatError(f"{path}: missing CRC32 trailer")
    try:
        stated = int(tail[6:].strip().decode("ascii"), 16)
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable CRC32 trailer") from exc
    if zlib.crc32(body) & 0xFFFFFFFF != stated:
        raise FormatError(f"{path}: checksum mismatch, refusing to load")
    lines = body.decode("utf-8").splitlines()
    if not lines or lines[0] != VAULT_MAGIC:
        raise FormatError(f"{path}: missing {VAULT_MAGIC!r} header")
    vault = Vault()
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != 5:
            raise FormatError(f"{path}: bad vault line {ln!r}")
        uid, k_s, ver_s, ts_s, hex_digest = parts
        try:
            tpl = ProtectedTemplate(
                user_id=uid,
                digest=bytes.fromhex(hex_digest),
                k=int(k_s),
                created_at=int(ts_s),
                code_version=int(ver_s),
            )
        except ValueError as exc:
            raise FormatError(f"{path}: bad vault line {ln!r}") from exc
        if uid in vault.templates:
            raise FormatError(f"{path}: duplicate user {uid!r}")
        vault.templates[uid] = tpl
    return vault

"""Software emulation of TPM-style key sealing.

A device root secret lives in a small store file::

    b"FZKS" | version (0x01) | root secret (32) | integrity tag (16)

The tag is an AES-GCM tag over the header and root secret, keyed from
the root itself, so any corruption is detected on load instead of being
silently regenerated.

Per-envelope session secrets are sealed with AES-256-GCM using the
condition digest as associated data. The sealed blob carries an outer
HMAC over nonce and ciphertext so that a tampered blob or wrong device
(:class:`SealAuthError`) can be told apart from a blob presented with a
different condition digest (:class:`BindingError`).
"""

from __future__ import annotations

import fcntl
import hashlib
import hmac
import os
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import BindingError, SealAuthError, StoreCorrupted, StoreError, ValidationError
from .keyforge import random_bytes
from .probe import ConditionVector

STORE_MAGIC = b"FZKS"
STORE_VERSION = 1
ROOT_BYTES = 32
TAG_BYTES = 16
NONCE_BYTES = 12
SECRET_BYTES = 32
DIGEST_BYTES = 32
_STORE_SIZE = len(STORE_MAGIC) + 1 + ROOT_BYTES + TAG_BYTES
_SEALED_CT_BYTES = SECRET_BYTES + TAG_BYTES
SEALED_BYTES = NONCE_BYTES + _SEALED_CT_BYTES + TAG_BYTES
STORE_ENV = "FUZZKEY_STORE"


def default_store_path() -> Path:
    env = os.environ.get(STORE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".fuzzkey" / "root.fzks"


def _subkey(root_secret: bytes, label: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=b"fuzzkey/" + label).derive(root_secret)


@dataclass(frozen=True)
class DeviceRoot:
    root_secret: bytes = field(repr=False)
    created_at: float
    device_tag: str

    @classmethod
    def from_secret(cls, root_secret: bytes, created_at: float) -> DeviceRoot:
        tag = hashlib.sha256(b"fuzzkey/device-tag" + root_secret).hexdigest()[:16]
        return cls(root_secret, created_at, tag)


@dataclass(frozen=True)
class SealedSecret:
    nonce: bytes
    blob: bytes
    binding_digest: bytes | None = field(default=None, compare=False)

    def to_bytes(self) -> bytes:
        return self.nonce + self.blob

    @classmethod
    def from_bytes(cls, data: bytes) -> SealedSecret:
        if len(data) != SEALED_BYTES:
            raise SealAuthError(f"sealed secret must be {SEALED_BYTES} bytes, got {len(data)}")
        return cls(bytes(data[:NONCE_BYTES]), bytes(data[NONCE_BYTES:]))


# --------------------------------------------------------------------------
# store file


def _integrity_tag(root_secret: bytes) -> bytes:
    header = STORE_MAGIC + bytes([STORE_VERSION]) + root_secret
    # empty plaintext under a key unique to this root: a fixed nonce is safe
    return AESGCM(_subkey(root_secret, b"store-integrity")).encrypt(bytes(NONCE_BYTES), b"", header)


def _encode_store(root_secret: bytes) -> bytes:
    return STORE_MAGIC + bytes([STORE_VERSION]) + root_secret + _integrity_tag(root_secret)


def _decode_store(data: bytes, path: Path) -> bytes:
    if len(data) != _STORE_SIZE or data[:4] != STORE_MAGIC:
        raise StoreCorrupted(f"{path}: not a fuzzkey store file")
    if data[4] != STORE_VERSION:
        raise StoreCorrupted(f"{path}: unsupported store version {data[4]}")
    root_secret = data[5 : 5 + ROOT_BYTES]
    if not hmac.compare_digest(_integrity_tag(root_secret), data[5 + ROOT_BYTES :]):
        raise StoreCorrupted(f"{path}: integrity check failed")
    return root_secret


def init_device_root(store_path: str | os.PathLike) -> DeviceRoot:
    """Load the device root from ``store_path``, creating it on first use.

    Creation holds an advisory lock on ``<store>.lock`` and writes the
    file atomically with mode 0600.
    """
    path = Path(store_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        lock_fd = os.open(f"{path}.lock", os.O_RDWR | os.O_CREAT, 0o600)
    except OSError as exc:
        raise StoreError(f"cannot open store {path}: {exc.strerror or exc}") from exc
    try:
        fcntl.flock(lock_fd, fcntl.LOCK_EX)
        if path.exists():
            try:
                data = path.read_bytes()
            except OSError as exc:
                raise StoreError(f"cannot read store {path}: {exc.strerror or exc}") from exc
            return DeviceRoot.from_secret(_decode_store(data, path), path.stat().st_mtime)
        root_secret = random_bytes(ROOT_BYTES)
        try:
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".fzks-")
            try:
                os.fchmod(fd, 0o600)
                os.write(fd, _encode_store(root_secret))
                os.fsync(fd)
            finally:
                os.close(fd)
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreError(f"cannot write store {path}: {exc.strerror or exc}") from exc
        return DeviceRoot.from_secret(root_secret, time.time())
    finally:
        fcntl.flock(lock_fd, fcntl.LOCK_UN)
        os.close(lock_fd)


# --------------------------------------------------------------------------
# sealing


def _outer_mac(root: DeviceRoot, nonce: bytes, ct: bytes) -> bytes:
    return hmac.new(_subkey(root.root_secret, b"seal-mac"), nonce + ct, "sha256").digest()[:TAG_BYTES]


def seal(root: DeviceRoot, session_secret: bytes, binding_digest: bytes) -> SealedSecret:
    if len(session_secret) != SECRET_BYTES:
        raise ValidationError(f"session secret must be {SECRET_BYTES} bytes")
    if len(binding_digest) != DIGEST_BYTES:
        raise ValidationError(f"binding digest must be {DIGEST_BYTES} bytes")
    nonce = random_bytes(NONCE_BYTES)
    ct = AESGCM(_subkey(root.root_secret, b"seal")).encrypt(nonce, session_secret, binding_digest)
    return SealedSecret(nonce, ct + _outer_mac(root, nonce, ct), binding_digest)


def unseal(root: DeviceRoot, sealed: SealedSecret, binding_digest: bytes) -> bytes:
    """Recover the session secret.

    Raises SealAuthError if the blob was altered or sealed by another
    device root, BindingError if it is authentic but bound to a
    different digest.
    """
    if len(sealed.nonce) != NONCE_BYTES or len(sealed.blob) != _SEALED_CT_BYTES + TAG_BYTES:
        raise SealAuthError("sealed secret has the wrong size")
    ct, mac = sealed.blob[:-TAG_BYTES], sealed.blob[-TAG_BYTES:]
    if not hmac.compare_digest(mac, _outer_mac(root, sealed.nonce, ct)):
        raise SealAuthError("sealed secret is not authentic for this device")
    try:
        return AESGCM(_subkey(root.root_secret, b"seal")).decrypt(sealed.nonce, ct, bytes(binding_digest))
    except InvalidTag:
        raise BindingError("sealed secret is bound to different conditions") from None


def encode_condition_record(cpu_percent: float, process_count: int, timestamp: float, fe_q: float) -> bytes:
    """Canonical little-endian record: f64 cpu, u32 processes, f64 time, u16 score*100."""
    return struct.pack("<dIdH", cpu_percent, process_count, timestamp, round(fe_q * 100))


def condition_digest(cv: ConditionVector, fe_q: float) -> bytes:
    return hashlib.sha256(encode_condition_record(cv.cpu_percent, cv.process_count, cv.timestamp, fe_q)).digest()


class SealBackend(Protocol):
    def seal(self, session_secret: bytes, binding_digest: bytes) -> SealedSecret: ...

    def unseal(self, sealed: SealedSecret, binding_digest: bytes) -> bytes: ...


class SoftwareSealStore:
    """Default backend: a device root held in a local store file."""

    def __init__(self, root: DeviceRoot):
        self._root = root

    @classmethod
    def open(cls, store_path: str | os.PathLike | None = None) -> SoftwareSealStore:
        return cls(init_device_root(store_path or default_store_path()))

    @property
    def device_tag(self) -> str:
        return self._root.device_tag

    def seal(self, session_secret: bytes, binding_digest: bytes) -> SealedSecret:
        return seal(self._root, session_secret, binding_digest)

    def unseal(self, sealed: SealedSecret, binding_digest: bytes) -> bytes:
        return unseal(self._root, sealed, binding_digest)

    def __repr__(self):
        return f"SoftwareSealStore(device_tag={self.device_tag!r})"

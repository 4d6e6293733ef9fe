"""Envelope container, AES-256-GCM encryption and the KMS-gated decryption path.

Layout (all integers and floats little-endian)::

    magic "FZK1" | version u8 | kdf_iterations u32 | salt[16] | iv[12]
    | t_enc f64 | cpu_enc f64 | proc_enc u32 | fe_q u16 (score * 100)
    | sealed_len u16 | sealed (nonce || blob)
    | ct_len u64 | ciphertext | tag[16]

Everything from magic through fe_q is the AES-GCM associated data. The
encryption-time conditions sit in that cleartext header because the
decryptor needs them to rebuild the KDF input and the sealing digest
before it holds any key.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import keyforge
from .errors import (
    AuthFailure,
    BadMagic,
    ConfigError,
    Denied,
    InvalidField,
    LengthOverflow,
    SealAuthError,
    Truncated,
    UnknownVersion,
    ValidationError,
)
from .kms import KmsConfig, compute_kms, encryption_entropy
from .probe import ConditionProvider, ConditionVector
from .sealstore import SealBackend, SealedSecret, condition_digest

MAGIC = b"FZK1"
VERSION = 1
IV_BYTES = 12
TAG_BYTES = 16
_HEADER = struct.Struct("<4sBI16s12sddIH")
HEADER_BYTES = _HEADER.size
_U16 = struct.Struct("<H")
_U64 = struct.Struct("<Q")
MAX_SEALED = 0xFFFF
# GCM's per-message limit: 2**39 - 256 bits
MAX_CIPHERTEXT = (1 << 36) - 32

RandomSource = Callable[[int], bytes]


@dataclass(frozen=True)
class Envelope:
    kdf_iterations: int
    salt: bytes
    iv: bytes
    t_enc: float
    cpu_enc: float
    proc_enc: int
    fe_q: float
    sealed: bytes
    ciphertext: bytes
    tag: bytes
    version: int = VERSION

    @property
    def fe_scaled(self) -> int:
        return round(self.fe_q * 100)

    @property
    def conditions(self) -> ConditionVector:
        return ConditionVector(self.cpu_enc, self.proc_enc, self.t_enc)

    def header_bytes(self) -> bytes:
        return _HEADER.pack(
            MAGIC, self.version, self.kdf_iterations, self.salt, self.iv,
            self.t_enc, self.cpu_enc, self.proc_enc, self.fe_scaled,
        )

    def serialize(self) -> bytes:
        return b"".join((
            self.header_bytes(),
            _U16.pack(len(self.sealed)), self.sealed,
            _U64.pack(len(self.ciphertext)), self.ciphertext,
            self.tag,
        ))

    def describe(self) -> dict:
        """Header fields as a JSON-friendly dict (no secret material)."""
        return {
            "version": self.version,
            "kdf_iterations": self.kdf_iterations,
            "salt": self.salt.hex(),
            "iv": self.iv.hex(),
            "t_enc": self.t_enc,
            "cpu_enc": self.cpu_enc,
            "proc_enc": self.proc_enc,
            "fe_q": self.fe_q,
            "sealed_len": len(self.sealed),
            "ciphertext_len": len(self.ciphertext),
        }


def _need(data: memoryview, offset: int, n: int, what: str) -> None:
    if len(data) - offset < n:
        raise Truncated(f"truncated {what}: need {n} bytes at offset {offset}, have {max(len(data) - offset, 0)}")


def parse(data: bytes) -> Envelope:
    """Strictly parse envelope bytes; every malformation raises an EnvelopeFormatError."""
    buf = memoryview(bytes(data))
    head = bytes(buf[:4])
    if head != MAGIC[: len(head)]:
        raise BadMagic(f"bad magic {head!r}")
    _need(buf, 0, 5, "magic/version")
    if buf[4] != VERSION:
        raise UnknownVersion(f"unknown envelope version {buf[4]}")
    _need(buf, 0, HEADER_BYTES, "header")
    _, version, iters, salt, iv, t_enc, cpu, proc, fe = _HEADER.unpack_from(buf, 0)
    if not keyforge.MIN_ITERATIONS <= iters <= keyforge.MAX_ITERATIONS:
        raise InvalidField(f"kdf_iterations {iters} outside [{keyforge.MIN_ITERATIONS}, {keyforge.MAX_ITERATIONS}]")
    if not (math.isfinite(t_enc) and t_enc > 0):
        raise InvalidField(f"t_enc {t_enc!r} is not a positive finite time")
    if not (math.isfinite(cpu) and 0.0 <= cpu <= 100.0):
        raise InvalidField(f"cpu_enc {cpu!r} outside [0, 100]")
    if fe > 100:
        raise InvalidField(f"fe_q {fe / 100} outside [0, 1]")
    off = HEADER_BYTES
    _need(buf, off, 2, "sealed_len")
    (sealed_len,) = _U16.unpack_from(buf, off)
    off += 2
    _need(buf, off, sealed_len, "sealed secret")
    sealed = bytes(buf[off : off + sealed_len])
    off += sealed_len
    _need(buf, off, 8, "ct_len")
    (ct_len,) = _U64.unpack_from(buf, off)
    off += 8
    if ct_len > MAX_CIPHERTEXT:
        raise LengthOverflow(f"ciphertext length {ct_len} exceeds the AES-GCM limit")
    if ct_len > len(buf) - off:
        raise Truncated(f"truncated ciphertext: declared {ct_len} bytes, have {len(buf) - off}")
    ciphertext = bytes(buf[off : off + ct_len])
    off += ct_len
    _need(buf, off, TAG_BYTES, "tag")
    tag = bytes(buf[off : off + TAG_BYTES])
    off += TAG_BYTES
    if off != len(buf):
        raise LengthOverflow(f"{len(buf) - off} trailing bytes after tag")
    return Envelope(iters, salt, iv, t_enc, cpu, proc, fe / 100, sealed, ciphertext, tag, version)


def serialize(env: Envelope) -> bytes:
    return env.serialize()


def encrypt(
    plaintext: bytes,
    password: bytes,
    provider: ConditionProvider,
    store: SealBackend,
    config: KmsConfig,
    weights=None,
    *,
    iterations: int = keyforge.DEFAULT_ITERATIONS,
    rng: RandomSource = keyforge.random_bytes,
) -> Envelope:
    """Encrypt ``plaintext`` bound to the current conditions.

    ``rng`` supplies the salt, IV and session secret; only tests and the
    CLI's insecure determinism flag replace it.
    """
    if not password:
        raise ValidationError("password must not be empty")
    if weights is not None and weights != config.weights:
        config = KmsConfig(config.rulebase, config.threshold_tau, weights, config.entropy_sets)
    cv = provider.sample()
    fe_q = keyforge.quantize_fe(encryption_entropy(config, cv, password))
    params = keyforge.KdfParams(rng(keyforge.SALT_BYTES), iterations)
    session_secret = rng(keyforge.SECRET_BYTES)
    sealed = store.seal(session_secret, condition_digest(cv, fe_q))
    key = keyforge.derive_key(password, fe_q, cv.timestamp, session_secret, params)
    iv = rng(IV_BYTES)
    env = Envelope(
        params.iterations, params.salt, iv, cv.timestamp, cv.cpu_percent, cv.process_count,
        fe_q, sealed.to_bytes(), b"", bytes(TAG_BYTES),
    )
    ct_and_tag = AESGCM(key.key).encrypt(iv, plaintext, env.header_bytes())
    return Envelope(
        env.kdf_iterations, env.salt, iv, env.t_enc, env.cpu_enc, env.proc_enc, fe_q,
        env.sealed, ct_and_tag[:-TAG_BYTES], ct_and_tag[-TAG_BYTES:],
    )


def decrypt(
    env: Envelope,
    password: bytes,
    provider: ConditionProvider,
    store: SealBackend,
    config: KmsConfig,
) -> bytes:
    """Gate on the key match score, then unseal, re-derive and authenticate.

    Raises Denied (score below tau, before any key material is touched),
    BindingError (stored conditions do not match the sealed digest) or
    AuthFailure (tag mismatch, tampered sealed secret, wrong password or
    device).
    """
    current = provider.sample()
    score = compute_kms(config, current, env.t_enc)
    if not score.passes(config.threshold_tau):
        raise Denied(score.value, config.threshold_tau)
    try:
        params = keyforge.KdfParams(env.salt, env.kdf_iterations)
        stored = env.conditions
    except (ConfigError, ValidationError) as exc:
        raise InvalidField(str(exc)) from None
    try:
        sealed = SealedSecret.from_bytes(env.sealed)
        session_secret = store.unseal(sealed, condition_digest(stored, env.fe_q))
    except SealAuthError as exc:
        raise AuthFailure(f"sealed secret rejected: {exc}") from None
    key = keyforge.derive_key(password, env.fe_q, env.t_enc, session_secret, params)
    try:
        return AESGCM(key.key).decrypt(env.iv, env.ciphertext + env.tag, env.header_bytes())
    except InvalidTag:
        raise AuthFailure("authentication tag mismatch") from None

"""Final key derivation from password, fuzzy entropy score, sealed secret and salt.

The KDF input string keeps the ``<password>_<score>_<timestamp>`` layout,
e.g. ``b"secretMessage_0.73_168243.229"``. It is hashed together with the
32-byte unsealed session secret and stretched with PBKDF2-HMAC-SHA256.
Passwords containing ``_`` can alias other inputs at the string level;
the salt and session secret still separate envelopes.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .errors import ConfigError, RandomnessError, ValidationError

DEFAULT_ITERATIONS = 100_000
MIN_ITERATIONS = 10_000
# Envelope parsing rejects anything above this so a corrupted header
# cannot stall decryption in the KDF.
MAX_ITERATIONS = 10_000_000
KEY_BYTES = 32
SALT_BYTES = 16
SECRET_BYTES = 32


def generate_salt() -> bytes:
    return random_bytes(SALT_BYTES)


def random_bytes(n: int) -> bytes:
    """``n`` bytes from the OS CSPRNG; never falls back to a weaker source."""
    try:
        return os.urandom(n)
    except NotImplementedError as exc:
        raise RandomnessError("no operating-system randomness source") from exc


@dataclass(frozen=True)
class KdfParams:
    salt: bytes
    iterations: int = DEFAULT_ITERATIONS
    key_length_bits: int = 256

    def __post_init__(self):
        if len(self.salt) != SALT_BYTES:
            raise ConfigError(f"salt must be {SALT_BYTES} bytes, got {len(self.salt)}")
        if not MIN_ITERATIONS <= self.iterations <= MAX_ITERATIONS:
            raise ConfigError(f"iterations must lie in [{MIN_ITERATIONS}, {MAX_ITERATIONS}], got {self.iterations}")
        if self.key_length_bits != 256:
            raise ConfigError("only 256-bit keys are supported")

    @classmethod
    def fresh(cls, iterations: int = DEFAULT_ITERATIONS) -> KdfParams:
        return cls(generate_salt(), iterations)


@dataclass(frozen=True)
class DerivedKey:
    key: bytes = field(repr=False)
    # Only populated when derive_key(..., keep_transcript=True); tests use it.
    transcript: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise ValidationError(f"derived key must be {KEY_BYTES} bytes")

    def __bytes__(self):
        return self.key


def quantize_fe(fe: float) -> float:
    """Round half-up to two decimals (0.735 -> 0.74).

    Uses the shortest decimal repr of the float, so values written as
    ``x.xx5`` round up even when their binary form sits just below.
    """
    return float(Decimal(repr(float(fe))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def build_kdf_input(password: bytes, fe_q: float, t_enc: float) -> bytes:
    return b"%s_%.2f_%.3f" % (password, fe_q, t_enc)


def derive_key(
    password: bytes,
    fe_q: float,
    t_enc: float,
    tpm_secret: bytes,
    params: KdfParams,
    *,
    keep_transcript: bool = False,
) -> DerivedKey:
    if len(tpm_secret) != SECRET_BYTES:
        raise ValidationError(f"device secret must be {SECRET_BYTES} bytes")
    transcript = build_kdf_input(password, fe_q, t_enc)
    secret = hashlib.sha256(transcript + tpm_secret).digest()
    key = hashlib.pbkdf2_hmac("sha256", secret, params.salt, params.iterations, dklen=KEY_BYTES)
    return DerivedKey(key, transcript if keep_transcript else None)

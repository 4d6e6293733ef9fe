"""Exception hierarchy shared by every fuzzkey module."""

from __future__ import annotations


class FuzzKeyError(Exception):
    """Base class for all errors raised by fuzzkey."""


class ConfigError(FuzzKeyError, ValueError):
    """Invalid fuzzy system, weights, KDF parameters or config file."""


class ValidationError(FuzzKeyError, ValueError):
    """An argument violates an operation's precondition."""


class RandomnessError(FuzzKeyError):
    """The operating system CSPRNG is unavailable."""


class ProbeError(FuzzKeyError):
    """A system metric could not be sampled."""

    def __init__(self, metric: str, reason: str = "unavailable"):
        super().__init__(f"cannot sample {metric}: {reason}")
        self.metric = metric


class ProviderExhausted(ProbeError):
    """A scripted condition provider ran out of vectors."""

    def __init__(self, consumed: int):
        FuzzKeyError.__init__(self, f"scripted provider exhausted after {consumed} samples")
        self.metric = "scripted"
        self.consumed = consumed


class StoreError(FuzzKeyError):
    """The sealstore file cannot be created, read or written."""


class StoreCorrupted(StoreError):
    """The sealstore file failed its integrity check."""


class SealAuthError(FuzzKeyError):
    """A sealed blob is not authentic under this device root."""


class BindingError(FuzzKeyError):
    """A sealed secret was bound to a different condition digest."""


class AuthFailure(FuzzKeyError):
    """Envelope authentication failed (tampered data, wrong password or device)."""


class Denied(FuzzKeyError):
    """The key match score fell below the threshold; no key material was used."""

    def __init__(self, kms: float, tau: float):
        super().__init__(f"key match score {kms:.4f} below threshold {tau:.4f}")
        self.kms = kms
        self.tau = tau


class EnvelopeFormatError(AuthFailure, ValueError):
    """Base for malformed envelope bytes.

    A malformed envelope cannot be authenticated, so these are AuthFailures;
    the subclasses say which structural check failed.
    """


class BadMagic(EnvelopeFormatError):
    pass


class UnknownVersion(EnvelopeFormatError):
    pass


class Truncated(EnvelopeFormatError):
    pass


class LengthOverflow(EnvelopeFormatError):
    pass


class InvalidField(EnvelopeFormatError):
    """A fixed-size header field holds a value outside its legal range."""

"""Condition-bound encryption keys gated by a Mamdani fuzzy key match score."""

from .envelope import Envelope, decrypt, encrypt, parse, serialize
from .errors import (
    AuthFailure,
    BindingError,
    ConfigError,
    Denied,
    EnvelopeFormatError,
    FuzzKeyError,
    ProbeError,
    StoreError,
)
from .kms import KmsConfig, compute_kms, default_config, entropy_score, load_config
from .probe import ConditionVector, FixedProvider, LiveProvider, ScriptedProvider
from .sealstore import SoftwareSealStore

__version__ = "0.1.0"

__all__ = [
    "AuthFailure", "BindingError", "ConditionVector", "ConfigError", "Denied", "Envelope",
    "EnvelopeFormatError", "FixedProvider", "FuzzKeyError", "KmsConfig", "LiveProvider",
    "ProbeError", "ScriptedProvider", "SoftwareSealStore", "StoreError", "compute_kms",
    "decrypt", "default_config", "encrypt", "entropy_score", "load_config", "parse", "serialize",
]

"""Byte-level Shannon entropy estimator."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def shannon_entropy(data: bytes) -> float:
    """Plug-in Shannon entropy of the byte histogram, in bits per byte (0..8)."""
    if not data:
        raise ValidationError("entropy of empty data is undefined")
    counts = np.bincount(np.frombuffer(bytes(data), dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(data)
    return float(max(0.0, -(p * np.log2(p)).sum()))

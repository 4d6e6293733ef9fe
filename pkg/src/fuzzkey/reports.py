"""Drift sweep, key-entropy report and round-trip benchmark."""

from __future__ import annotations

import csv
import hashlib
import io
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np

from . import keyforge
from .entropy import shannon_entropy
from .envelope import decrypt, encrypt, parse
from .errors import ValidationError
from .kms import (
    CPU,
    DRIFT,
    PROCESSES,
    KmsConfig,
    condition_membership,
    entropy_score,
    password_membership,
    score_inputs,
    timestamp_membership,
)
from .probe import ConditionVector, FixedProvider
from .sealstore import SealBackend

ENTROPY_THRESHOLD = 7.9
CSV_HEADER = ("drift", "kms", "fe")


class SweepRow(NamedTuple):
    drift: float
    kms: float
    fe: float


def drift_sweep(
    config: KmsConfig,
    cpu: float,
    processes: int,
    start: float = 0.0,
    stop: float = 10.0,
    step: float = 0.5,
    password: bytes = b"secretMessage",
    t_enc: float = 168243.229,
) -> list[SweepRow]:
    """KMS and entropy score at evenly spaced drifts between ``start`` and ``stop``.

    ``fe`` is the entropy score of a context sampled ``drift`` seconds
    after ``t_enc`` with the given cpu load and password.
    """
    if not (step > 0 and 0 <= start <= stop <= 10):
        raise ValidationError("sweep needs 0 <= start <= stop <= 10 and step > 0")
    if not (0 <= cpu <= 100 and processes >= 0):
        raise ValidationError("sweep needs cpu in [0, 100] and processes >= 0")
    n = int(round((stop - start) / step)) + 1
    drifts = np.round(start + step * np.arange(n), 10)
    drifts = drifts[drifts <= stop + 1e-9]
    mu_phi = condition_membership(cpu / 10.0, config.entropy_sets)
    mu_p = password_membership(password)
    rows = []
    for d in drifts:
        kms = score_inputs(config, {CPU: cpu, PROCESSES: processes, DRIFT: float(d)})
        fe = entropy_score(mu_phi, mu_p, timestamp_membership(t_enc + d, config.entropy_sets), config.weights)
        rows.append(SweepRow(float(d), kms.value, fe))
    return rows


def write_sweep_csv(rows: Iterable[SweepRow], out: io.TextIOBase) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow((f"{r.drift:.4f}", f"{r.kms:.6f}", f"{r.fe:.6f}"))


@dataclass
class EntropyReport:
    n_keys: int
    bits_per_byte: float
    threshold: float = ENTROPY_THRESHOLD

    @property
    def passed(self) -> bool:
        return self.bits_per_byte >= self.threshold


def key_entropy_report(
    n: int,
    *,
    iterations: int = keyforge.MIN_ITERATIONS,
    constant_inputs: bool = False,
    rng: Callable[[int], bytes] = keyforge.random_bytes,
) -> EntropyReport:
    """Derive ``n`` keys and measure the Shannon entropy of their pooled bytes.

    With ``constant_inputs`` only the salt varies between derivations.
    """
    if n < 100:
        raise ValidationError("entropy report needs at least 100 keys")
    pooled = bytearray()
    for _ in range(n):
        if constant_inputs:
            password, fe_q, t, secret = b"secretMessage", 0.73, 168243.229, bytes(32)
        else:
            password = rng(16).hex().encode()
            fe_q = int.from_bytes(rng(1), "little") % 101 / 100
            t = 1.0 + int.from_bytes(rng(6), "little") / 1000
            secret = rng(keyforge.SECRET_BYTES)
        params = keyforge.KdfParams(rng(keyforge.SALT_BYTES), iterations)
        pooled += keyforge.derive_key(password, fe_q, t, secret, params).key
    return EntropyReport(n, shannon_entropy(bytes(pooled)))


@dataclass
class BenchResult:
    iterations: int
    kdf_iterations: int
    samples_ms: list[float]

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(self.samples_ms)

    @property
    def median_ms(self) -> float:
        return statistics.median(self.samples_ms)


def bench_roundtrip(
    store: SealBackend,
    config: KmsConfig,
    iterations: int = 50,
    kdf_iterations: int = keyforge.DEFAULT_ITERATIONS,
    payload: bytes = b"x" * 1024,
) -> BenchResult:
    """Wall-clock encrypt + serialize + parse + decrypt under a fixed provider."""
    provider = FixedProvider(ConditionVector(25.0, 65, time.time()))
    password = hashlib.sha256(b"bench").hexdigest().encode()
    samples = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        env = encrypt(payload, password, provider, store, config, iterations=kdf_iterations)
        out = decrypt(parse(env.serialize()), password, provider, store, config)
        samples.append((time.perf_counter() - t0) * 1000.0)
        if out != payload:
            raise RuntimeError("benchmark round trip returned different plaintext")
    return BenchResult(iterations, kdf_iterations, samples)

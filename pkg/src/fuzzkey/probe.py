"""Sampling of the system condition vector (CPU load, process count, time)."""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .errors import ProbeError, ProviderExhausted, ValidationError

DRIFT_CEILING = 10.0
DEFAULT_CPU_WINDOW = 0.1


@dataclass(frozen=True)
class ConditionVector:
    cpu_percent: float
    process_count: int
    timestamp: float

    def __post_init__(self):
        if not (math.isfinite(self.cpu_percent) and 0.0 <= self.cpu_percent <= 100.0):
            raise ValidationError(f"cpu_percent must lie in [0, 100], got {self.cpu_percent}")
        if int(self.process_count) != self.process_count or self.process_count < 0:
            raise ValidationError(f"process_count must be a non-negative integer, got {self.process_count}")
        if not (math.isfinite(self.timestamp) and self.timestamp > 0):
            raise ValidationError(f"timestamp must be positive, got {self.timestamp}")
        object.__setattr__(self, "cpu_percent", float(self.cpu_percent))
        object.__setattr__(self, "process_count", int(self.process_count))
        object.__setattr__(self, "timestamp", float(self.timestamp))


class ConditionProvider(Protocol):
    kind: str

    def sample(self) -> ConditionVector: ...


class LiveProvider:
    """Reads the host's CPU utilisation, visible PIDs and wall clock via psutil.

    CPU utilisation needs a measurement window; ``sample`` blocks for
    ``cpu_window`` seconds.
    """

    kind = "live"

    def __init__(self, cpu_window: float = DEFAULT_CPU_WINDOW):
        self.cpu_window = cpu_window

    def sample(self) -> ConditionVector:
        try:
            import psutil
        except ImportError as exc:  # pragma: no cover - psutil is a hard dependency
            raise ProbeError("cpu_percent", "psutil is not installed") from exc
        try:
            cpu = float(psutil.cpu_percent(interval=self.cpu_window))
        except Exception as exc:
            raise ProbeError("cpu_percent", str(exc)) from exc
        try:
            procs = len(psutil.pids())
        except Exception as exc:
            raise ProbeError("process_count", str(exc)) from exc
        return ConditionVector(min(max(cpu, 0.0), 100.0), procs, time.time())


class FixedProvider:
    kind = "fixed"

    def __init__(self, vector: ConditionVector):
        self.vector = vector

    def sample(self) -> ConditionVector:
        return self.vector


class ScriptedProvider:
    """Replays a fixed sequence of vectors, one per ``sample`` call."""

    kind = "scripted"

    def __init__(self, vectors: Iterable[ConditionVector]):
        self._vectors: Sequence[ConditionVector] = tuple(vectors)
        if not self._vectors:
            raise ValidationError("scripted provider needs at least one vector")
        self._next = 0
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return len(self._vectors) - self._next

    def sample(self) -> ConditionVector:
        with self._lock:
            if self._next >= len(self._vectors):
                raise ProviderExhausted(self._next)
            vector = self._vectors[self._next]
            self._next += 1
            return vector


def sample(provider: ConditionProvider) -> ConditionVector:
    return provider.sample()


def drift(t_enc: float, t_now: float) -> float:
    """Absolute clock difference in seconds, saturated at 10 s."""
    gap = abs(t_now - t_enc)
    if not gap < DRIFT_CEILING:  # also catches nan
        return DRIFT_CEILING
    return gap

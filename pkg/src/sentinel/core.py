"""Shared domain types: timestamps, modal events, threat scores, score arithmetic.

Everything here is an immutable value object; instances are safe to share
across concurrently running agents without synchronization.
"""

from __future__ import annotations

import hashlib
import ipaddress
import math
from dataclasses import dataclass
from enum import Enum
from functools import total_ordering

import numpy as np

MICROS_PER_SECOND = 1_000_000


class SentinelError(Exception):
    """Base class for all errors raised by this package."""


class InvalidValue(SentinelError):
    """A numeric input was non-finite or otherwise out of domain."""


class DegenerateRange(SentinelError):
    """A normalization range had lo >= hi."""


@total_ordering
@dataclass(frozen=True)
class Duration:
    """Signed span of time with microsecond resolution."""

    micros: int

    @classmethod
    def from_seconds(cls, seconds: float) -> Duration:
        return cls(round(seconds * MICROS_PER_SECOND))

    @property
    def seconds(self) -> float:
        return self.micros / MICROS_PER_SECOND

    def __add__(self, other: Duration) -> Duration:
        return Duration(self.micros + other.micros)

    def __sub__(self, other: Duration) -> Duration:
        return Duration(self.micros - other.micros)

    def __mul__(self, k: int) -> Duration:
        return Duration(self.micros * k)

    def __neg__(self) -> Duration:
        return Duration(-self.micros)

    def __lt__(self, other: Duration) -> bool:
        return self.micros < other.micros


@total_ordering
@dataclass(frozen=True)
class Timestamp:
    """UTC instant as non-negative microseconds since the epoch."""

    micros: int

    def __post_init__(self) -> None:
        if self.micros < 0:
            raise InvalidValue(f"timestamp must be non-negative, got {self.micros}")

    @classmethod
    def from_seconds(cls, seconds: float) -> Timestamp:
        return cls(round(seconds * MICROS_PER_SECOND))

    @property
    def seconds(self) -> float:
        return self.micros / MICROS_PER_SECOND

    def __lt__(self, other: Timestamp) -> bool:
        return self.micros < other.micros

    def __sub__(self, other: Timestamp) -> Duration:
        return Duration(self.micros - other.micros)

    def __add__(self, d: Duration) -> Timestamp:
        return Timestamp(self.micros + d.micros)


class Modality(Enum):
    """The three signal channels, in canonical tie-break order."""

    LOG = "log"
    VIDEO = "video"
    AUDIO = "audio"


MODALITY_ORDER = (Modality.LOG, Modality.VIDEO, Modality.AUDIO)


@dataclass(frozen=True)
class LogRecord:
    """One parsed cloud-audit record plus its derived numeric features."""

    event_time: Timestamp
    event_name: str
    source_ip: str
    user_identity: str
    region: str
    error_code: str | None
    numeric_features: tuple[float, ...]

    def __post_init__(self) -> None:
        try:
            ipaddress.IPv4Address(self.source_ip)
        except ValueError as exc:
            raise InvalidValue(f"source_ip is not dotted-quad IPv4: {self.source_ip!r}") from exc


@dataclass(frozen=True)
class FrameFeatures:
    """Precomputed features for one surveillance frame."""

    clip_id: str
    frame_index: int
    ts: Timestamp
    blur_variance: float
    zone_id: str
    embedding: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise InvalidValue(f"frame_index must be >= 0, got {self.frame_index}")
        if self.blur_variance < 0:
            raise InvalidValue(f"blur_variance must be >= 0, got {self.blur_variance}")


@dataclass(frozen=True)
class AudioFeatures:
    """Precomputed features for one environmental audio clip."""

    clip_id: str
    ts: Timestamp
    label: str
    label_confidence: float
    embedding: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.label_confidence <= 1.0:
            raise InvalidValue(
                f"label_confidence must be in [0,1], got {self.label_confidence}"
            )


Payload = LogRecord | FrameFeatures | AudioFeatures

_PAYLOAD_TYPE = {
    Modality.LOG: LogRecord,
    Modality.VIDEO: FrameFeatures,
    Modality.AUDIO: AudioFeatures,
}


@dataclass(frozen=True)
class ModalEvent:
    """One timestamped signal from one modality."""

    id: str
    modality: Modality
    ts: Timestamp
    payload: Payload

    def __post_init__(self) -> None:
        expected = _PAYLOAD_TYPE[self.modality]
        if not isinstance(self.payload, expected):
            raise InvalidValue(
                f"payload {type(self.payload).__name__} does not match "
                f"modality {self.modality.value}"
            )


@dataclass(frozen=True)
class ThreatScore:
    """Per-modality detector output.

    score and confidence are clamped to [0,1] at construction so every
    instance in the system satisfies the unit-interval invariant.
    """

    modality: Modality
    score: float
    confidence: float
    explanation: str
    event_ids: tuple[str, ...]
    produced_at: Timestamp

    def __post_init__(self) -> None:
        object.__setattr__(self, "score", clamp_unit(self.score))
        object.__setattr__(self, "confidence", clamp_unit(self.confidence))
        if not self.explanation:
            raise InvalidValue("explanation must be non-empty")


def clamp_unit(x: float) -> float:
    """Clamp a finite real to [0, 1]."""
    if not math.isfinite(x):
        raise InvalidValue(f"expected finite value, got {x}")
    return min(1.0, max(0.0, float(x)))


def minmax_normalize(x: float, lo: float, hi: float) -> float:
    """Map x linearly from [lo, hi] onto [0, 1], clamping outside the range."""
    for v in (x, lo, hi):
        if not math.isfinite(v):
            raise InvalidValue(f"expected finite value, got {v}")
    if lo >= hi:
        raise DegenerateRange(f"lo must be < hi, got lo={lo} hi={hi}")
    return clamp_unit((x - lo) / (hi - lo))


def stable_hash(text: str) -> int:
    """Process-independent 64-bit hash (Python's hash() is salted per run)."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(seed: int, component: str) -> np.random.Generator:
    """Derive an independent, reproducible generator for a named component.

    All stochastic pieces of the pipeline (subsampling, EM init, epsilon-greedy,
    crossover, scenario synthesis) draw from generators created here, so a run
    is fully determined by the single config seed.
    """
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stable_hash(component)]))


# Left-closed risk bands shared by explanations and the fusion gate.
MEDIUM_BAND = 0.4
HIGH_BAND = 0.7


def risk_band(score: float) -> str:
    """Band a unit-interval score: Low < 0.4 <= Medium < 0.7 <= High."""
    if score >= HIGH_BAND:
        return "High"
    if score >= MEDIUM_BAND:
        return "Medium"
    return "Low"

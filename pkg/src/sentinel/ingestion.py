"""Dataset parsing, perception-layer sampling, and window synchronization.

Files are UTF-8 JSON lines, one record per line. Log records use audit-trail
field names (eventTime, eventName, sourceIPAddress, userIdentity, awsRegion,
errorCode); frame and audio records use snake_case fields with epoch-micros
timestamps. The synchronizer plays the broker role: it merges the three
streams into tumbling event-time windows under a bounded watermark lag.
"""

from __future__ import annotations

import ipaddress
import json
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .core import (
    AudioFeatures,
    Duration,
    FrameFeatures,
    LogRecord,
    ModalEvent,
    Modality,
    SentinelError,
    Timestamp,
    stable_hash,
)


class ParseError(SentinelError):
    """A record line was malformed; .field names the offending field."""

    def __init__(self, field_name: str, detail: str = ""):
        self.field = field_name
        super().__init__(f"parse error on field {field_name}" + (f": {detail}" if detail else ""))


class OrderViolation(SentinelError):
    """Input that must be sorted was not."""


EVENT_NAME_BUCKETS = 16
RARITY_HORIZON = Duration.from_seconds(60.0)
BURST_HORIZON = Duration.from_seconds(10.0)
BURST_CAP = 20


class LogFeatureExtractor:
    """Derives the fixed 5-feature vector for each log record, in stream order.

    Features (all in [0,1]):
      0: hour of day / 24
      1: event-name hash bucket / 16
      2: ip rarity, 1 / occurrences of the source ip in the trailing 60 s
      3: error flag
      4: burst count in the trailing 10 s, capped at 20, / 20

    The extractor is stateful: rarity and burst are computed over the records
    it has already seen, so feature vectors are deterministic for a given
    record order.
    """

    def __init__(self) -> None:
        self._recent: deque[tuple[Timestamp, str]] = deque()

    def features(self, event_time: Timestamp, event_name: str, source_ip: str,
                 error_code: str | None) -> tuple[float, ...]:
        self._recent.append((event_time, source_ip))
        cutoff = event_time.micros - RARITY_HORIZON.micros
        while self._recent and self._recent[0][0].micros < cutoff:
            self._recent.popleft()

        ip_count = sum(1 for _, ip in self._recent if ip == source_ip)
        burst_cutoff = event_time.micros - BURST_HORIZON.micros
        burst = sum(1 for ts, _ in self._recent if ts.micros >= burst_cutoff)

        hour = datetime.fromtimestamp(event_time.seconds, tz=timezone.utc).hour
        bucket = stable_hash(event_name) % EVENT_NAME_BUCKETS
        return (
            hour / 24.0,
            bucket / EVENT_NAME_BUCKETS,
            1.0 / ip_count,
            1.0 if error_code else 0.0,
            min(burst, BURST_CAP) / BURST_CAP,
        )


def _parse_iso8601(value: str) -> Timestamp:
    text = value.replace("Z", "+00:00")
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return Timestamp(round(dt.timestamp() * 1_000_000))


def parse_log_line(line: str, extractor: LogFeatureExtractor | None = None) -> LogRecord:
    """Parse one audit log line into a LogRecord with derived features."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError("record", str(exc)) from None
    if not isinstance(obj, dict):
        raise ParseError("record", "expected a JSON object")

    for required in ("eventTime", "eventName", "sourceIPAddress", "userIdentity", "awsRegion"):
        if required not in obj:
            raise ParseError(_SNAKE[required])

    try:
        event_time = _parse_iso8601(str(obj["eventTime"]))
    except (ValueError, OverflowError):
        raise ParseError("event_time", f"bad ISO-8601 value {obj['eventTime']!r}") from None

    source_ip = str(obj["sourceIPAddress"])
    try:
        ipaddress.IPv4Address(source_ip)
    except ValueError:
        raise ParseError("source_ip", f"not dotted-quad IPv4: {source_ip!r}") from None

    error_code = obj.get("errorCode")
    extractor = extractor or LogFeatureExtractor()
    features = extractor.features(event_time, str(obj["eventName"]), source_ip, error_code)
    return LogRecord(
        event_time=event_time,
        event_name=str(obj["eventName"]),
        source_ip=source_ip,
        user_identity=str(obj["userIdentity"]),
        region=str(obj["awsRegion"]),
        error_code=str(error_code) if error_code is not None else None,
        numeric_features=features,
    )


_SNAKE = {
    "eventTime": "event_time",
    "eventName": "event_name",
    "sourceIPAddress": "source_ip",
    "userIdentity": "user_identity",
    "awsRegion": "region",
}


def parse_frame_line(line: str) -> FrameFeatures:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError("record", str(exc)) from None
    for required in ("clip_id", "frame_index", "ts", "blur_variance", "zone_id", "embedding"):
        if required not in obj:
            raise ParseError(required)
    return FrameFeatures(
        clip_id=str(obj["clip_id"]),
        frame_index=int(obj["frame_index"]),
        ts=Timestamp(int(obj["ts"])),
        blur_variance=float(obj["blur_variance"]),
        zone_id=str(obj["zone_id"]),
        embedding=tuple(float(v) for v in obj["embedding"]),
    )


def parse_audio_line(line: str) -> AudioFeatures:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError("record", str(exc)) from None
    for required in ("clip_id", "ts", "label", "label_confidence", "embedding"):
        if required not in obj:
            raise ParseError(required)
    return AudioFeatures(
        clip_id=str(obj["clip_id"]),
        ts=Timestamp(int(obj["ts"])),
        label=str(obj["label"]),
        label_confidence=float(obj["label_confidence"]),
        embedding=tuple(float(v) for v in obj["embedding"]),
    )


def sample_frames(frames: list[FrameFeatures], stride: int, blur_min: float) -> list[FrameFeatures]:
    """Keep every stride-th sharp frame, preserving order.

    A frame survives iff frame_index % stride == 0 and blur_variance >= blur_min.
    """
    if stride < 1:
        raise SentinelError(f"stride must be >= 1, got {stride}")
    for prev, cur in zip(frames, frames[1:]):
        if cur.frame_index < prev.frame_index:
            raise OrderViolation(
                f"frames not sorted by frame_index: {prev.frame_index} then {cur.frame_index}"
            )
    return [
        f for f in frames
        if f.frame_index % stride == 0 and f.blur_variance >= blur_min
    ]


@dataclass(frozen=True)
class WindowBatch:
    """All events of one tumbling window, grouped per modality and ts-sorted."""

    window_start: Timestamp
    window_len: Duration
    events_by_modality: dict[Modality, tuple[ModalEvent, ...]]

    @property
    def window_end(self) -> Timestamp:
        return self.window_start + self.window_len

    def events(self, modality: Modality) -> tuple[ModalEvent, ...]:
        return self.events_by_modality.get(modality, ())

    @property
    def index(self) -> int:
        return self.window_start.micros // self.window_len.micros


@dataclass
class StreamCursor:
    """Read-side progress of the synchronizer."""

    positions: dict[Modality, int] = field(default_factory=lambda: {m: 0 for m in Modality})
    watermark: Timestamp = field(default_factory=lambda: Timestamp(0))
    late_event_count: int = 0


class WindowSynchronizer:
    """Merges per-modality event streams into tumbling event-time windows.

    Windows are aligned to the epoch (start = floor(ts / len) * len). The
    watermark is the maximum event time seen across all streams; an event
    older than watermark - lag is counted late and dropped. A window is
    emitted once the watermark guarantees it can no longer receive events.

    offer() may be called from concurrent per-modality readers; emitted
    windows come from whichever caller advances the watermark, and flush()
    drains the rest. Single-threaded replay over ts-merged input is the
    canonical deterministic mode.
    """

    def __init__(self, window_len: Duration, lag: Duration):
        if window_len.micros <= 0:
            raise SentinelError("window_len must be positive")
        self.window_len = window_len
        self.lag = lag
        self.cursor = StreamCursor()
        self._pending: dict[int, list[ModalEvent]] = {}
        self._lock = threading.Lock()

    def _window_start(self, ts: Timestamp) -> int:
        return (ts.micros // self.window_len.micros) * self.window_len.micros

    def offer(self, event: ModalEvent) -> list[WindowBatch]:
        """Accept one event; return any windows that just became complete."""
        with self._lock:
            self.cursor.positions[event.modality] += 1
            if event.ts.micros > self.cursor.watermark.micros:
                self.cursor.watermark = event.ts
            if event.ts.micros < self.cursor.watermark.micros - self.lag.micros:
                self.cursor.late_event_count += 1
                return []
            self._pending.setdefault(self._window_start(event.ts), []).append(event)
            return self._emit_ready()

    def _emit_ready(self) -> list[WindowBatch]:
        bound = self.cursor.watermark.micros - self.lag.micros
        ready = sorted(w for w in self._pending if w + self.window_len.micros <= bound)
        return [self._seal(w) for w in ready]

    def _seal(self, window_start: int) -> WindowBatch:
        events = self._pending.pop(window_start)
        by_modality: dict[Modality, tuple[ModalEvent, ...]] = {}
        for modality in Modality:
            group = [e for e in events if e.modality is modality]
            group.sort(key=lambda e: (e.ts.micros, e.id))
            if group:
                by_modality[modality] = tuple(group)
        return WindowBatch(Timestamp(window_start), self.window_len, by_modality)

    def flush(self) -> list[WindowBatch]:
        """Seal and emit all remaining windows, in time order."""
        with self._lock:
            remaining = sorted(self._pending)
            return [self._seal(w) for w in remaining]


def synchronize(
    events_by_modality: dict[Modality, list[ModalEvent]],
    window_len: Duration,
    lag: Duration | None = None,
) -> list[WindowBatch]:
    """Single-threaded replay: merge sorted per-modality streams into windows.

    Events are offered in global ts order (stable across runs), which makes
    the late/window assignment deterministic.
    """
    lag = lag if lag is not None else Duration.from_seconds(1.0)
    sync = WindowSynchronizer(window_len, lag)
    merged: list[ModalEvent] = []
    for modality in Modality:
        merged.extend(events_by_modality.get(modality, []))
    merged.sort(key=lambda e: (e.ts.micros, e.modality.value, e.id))
    out: list[WindowBatch] = []
    for event in merged:
        out.extend(sync.offer(event))
    out.extend(sync.flush())
    return out


def read_jsonl(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]

"""Window-level perception agents built on the per-modality detectors.

Each agent scores every event in a window, aggregates by max, attaches a
detector-specific confidence, and emits a banded template explanation. Model
bundles persist as versioned JSON so fitting and scoring can run in separate
invocations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    AudioFeatures,
    FrameFeatures,
    LogRecord,
    MEDIUM_BAND,
    ModalEvent,
    Modality,
    SentinelError,
    ThreatScore,
    Timestamp,
    clamp_unit,
    risk_band,
)
from .detectors import (
    AutoencoderModel,
    GmmModel,
    IsolationForestModel,
    ae_score,
    gmm_score,
    iforest_score_detail,
)


class ModelNotFound(SentinelError):
    """A required model file is missing from the bundle directory."""


def make_threat_score(
    modality: Modality,
    raw_score: float,
    event_ids: list[str],
    label_context: str,
    confidence: float,
    produced_at: Timestamp,
) -> ThreatScore:
    """Wrap a unit-interval raw score in the banded explanation template."""
    score = clamp_unit(raw_score)
    ids = ",".join(event_ids) if event_ids else "none"
    explanation = (
        f"Risk {risk_band(score)}: {modality.value} detector score {score:.2f}; "
        f"contributing events {ids}; context {label_context}"
    )
    return ThreatScore(
        modality=modality,
        score=score,
        confidence=clamp_unit(confidence),
        explanation=explanation,
        event_ids=tuple(event_ids),
        produced_at=produced_at,
    )


def neutral_score(modality: Modality, produced_at: Timestamp) -> ThreatScore:
    """Stand-in for a modality with no events this window; attention
    naturally down-weights its zero confidence."""
    return make_threat_score(modality, 0.0, [], "no-signal", 0.0, produced_at)


@dataclass
class WindowScore:
    """One agent's verdict on one window, plus per-event detail for tracing."""

    threat: ThreatScore
    event_scores: dict[str, float]
    entities: dict[str, str] = field(default_factory=dict)


class LogAgent:
    """Isolation-forest agent; confidence falls with per-tree disagreement."""

    modality = Modality.LOG

    def __init__(self, model: IsolationForestModel):
        self.model = model

    def score_window(self, events: tuple[ModalEvent, ...], produced_at: Timestamp) -> WindowScore:
        if not events:
            return WindowScore(neutral_score(self.modality, produced_at), {})
        per_event: dict[str, float] = {}
        best_score, best_spread, best_payload = -1.0, 0.0, None
        for event in events:
            payload: LogRecord = event.payload
            score, per_tree = iforest_score_detail(self.model, payload.numeric_features)
            per_event[event.id] = score
            if score > best_score:
                best_score, best_payload = score, payload
                best_spread = float(per_tree.var())
        contributing = [e.id for e in events if per_event[e.id] >= MEDIUM_BAND]
        context = f"{best_payload.event_name} from {best_payload.source_ip}"
        confidence = 1.0 - best_spread
        threat = make_threat_score(
            self.modality, best_score, contributing, context, confidence, produced_at
        )
        entities = {
            "source_ip": best_payload.source_ip,
            "account": best_payload.user_identity,
        }
        return WindowScore(threat, per_event, entities)


class VideoAgent:
    """Autoencoder agent; confidence falls as frame scores disagree."""

    modality = Modality.VIDEO

    def __init__(self, model: AutoencoderModel):
        self.model = model

    def score_window(self, events: tuple[ModalEvent, ...], produced_at: Timestamp) -> WindowScore:
        if not events:
            return WindowScore(neutral_score(self.modality, produced_at), {})
        per_event: dict[str, float] = {}
        zones: dict[str, str] = {}
        for event in events:
            payload: FrameFeatures = event.payload
            per_event[event.id] = ae_score(self.model, payload.embedding)
            zones[event.id] = payload.zone_id
        best_id = max(per_event, key=lambda i: (per_event[i], i))
        best_score = per_event[best_id]
        contributing = [e.id for e in events if per_event[e.id] >= MEDIUM_BAND]
        confidence = 1.0 - float(np.var(list(per_event.values())))
        context = f"zone {zones[best_id]}"
        threat = make_threat_score(
            self.modality, best_score, contributing, context, confidence, produced_at
        )
        return WindowScore(threat, per_event, {"zone": zones[best_id]})


class AudioAgent:
    """GMM agent; confidence comes from the upstream label classifier."""

    modality = Modality.AUDIO

    def __init__(self, model: GmmModel):
        self.model = model

    def score_window(self, events: tuple[ModalEvent, ...], produced_at: Timestamp) -> WindowScore:
        if not events:
            return WindowScore(neutral_score(self.modality, produced_at), {})
        per_event: dict[str, float] = {}
        labels: dict[str, str] = {}
        confidences: list[float] = []
        for event in events:
            payload: AudioFeatures = event.payload
            per_event[event.id] = gmm_score(self.model, payload.embedding)
            labels[event.id] = payload.label
            confidences.append(payload.label_confidence)
        best_id = max(per_event, key=lambda i: (per_event[i], i))
        contributing = [e.id for e in events if per_event[e.id] >= MEDIUM_BAND]
        confidence = float(np.mean(confidences))
        context = labels[best_id]
        threat = make_threat_score(
            self.modality, per_event[best_id], contributing, context, confidence, produced_at
        )
        return WindowScore(threat, per_event, {"label": labels[best_id]})


@dataclass
class ModelBundle:
    """The three fitted detectors, persisted together."""

    iforest: IsolationForestModel
    autoencoder: AutoencoderModel
    gmm: GmmModel

    FILES = {
        "iforest": "iforest.json",
        "autoencoder": "autoencoder.json",
        "gmm": "gmm.json",
    }

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, model in (
            ("iforest", self.iforest),
            ("autoencoder", self.autoencoder),
            ("gmm", self.gmm),
        ):
            path = directory / self.FILES[name]
            path.write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> ModelBundle:
        directory = Path(directory)
        loaded = {}
        parsers = {
            "iforest": IsolationForestModel,
            "autoencoder": AutoencoderModel,
            "gmm": GmmModel,
        }
        for name, filename in cls.FILES.items():
            path = directory / filename
            if not path.exists():
                raise ModelNotFound(f"missing model file: {path}")
            loaded[name] = parsers[name].from_dict(json.loads(path.read_text(encoding="utf-8")))
        return cls(**loaded)

    def agents(self) -> dict[Modality, LogAgent | VideoAgent | AudioAgent]:
        return {
            Modality.LOG: LogAgent(self.iforest),
            Modality.VIDEO: VideoAgent(self.autoencoder),
            Modality.AUDIO: AudioAgent(self.gmm),
        }

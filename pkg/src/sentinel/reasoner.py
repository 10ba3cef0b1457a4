"""Hypothesis generation: prompts from weighted explanations, pluggable
backends, and escalation summaries.

The deterministic backend applies a fixed rule table over the per-modality
risk bands, so the pipeline runs fully offline. The remote backend posts the
prompt to a configured endpoint and parses a constrained two-line reply; any
failure falls back to the deterministic rules after bounded retries.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .core import (
    HIGH_BAND,
    MODALITY_ORDER,
    Modality,
    SentinelError,
    ThreatScore,
    risk_band,
)
from .fusion import FusedAssessment


class BackendUnavailable(SentinelError):
    """Remote backend unreachable or unusable after all retries."""


class ThreatClass(Enum):
    INTRUSION = "Intrusion"
    PHYSICAL_BREACH = "PhysicalBreach"
    COORDINATED_ATTACK = "CoordinatedAttack"
    BENIGN_ANOMALY = "BenignAnomaly"
    UNKNOWN = "Unknown"


class HypothesisSource(Enum):
    DETERMINISTIC = "deterministic"
    REMOTE = "remote"


# Advisory action names surfaced in narratives and escalation summaries.
ACTION_HINTS = {
    ThreatClass.INTRUSION: "BlockIp",
    ThreatClass.PHYSICAL_BREACH: "Lockdown",
    ThreatClass.COORDINATED_ATTACK: "Escalate",
    ThreatClass.BENIGN_ANOMALY: None,
    ThreatClass.UNKNOWN: "LogOnly",
}


@dataclass(frozen=True)
class Hypothesis:
    threat_class: ThreatClass
    narrative: str
    recommended_hint: str | None
    source: HypothesisSource

    def __post_init__(self) -> None:
        if not self.narrative:
            raise SentinelError("hypothesis narrative must be non-empty")


def classify_hypothesis(scores: dict[Modality, ThreatScore]) -> ThreatClass:
    """Fixed rule table over risk bands.

    Two or more High modalities mean a coordinated attack; a lone High log is
    an intrusion; a lone High video or audio is a physical breach; all Low is
    a benign anomaly; anything else is unknown.
    """
    bands = {m: risk_band(scores[m].score) for m in MODALITY_ORDER}
    highs = [m for m in MODALITY_ORDER if bands[m] == "High"]
    if len(highs) >= 2:
        return ThreatClass.COORDINATED_ATTACK
    if len(highs) == 1:
        return ThreatClass.INTRUSION if highs[0] is Modality.LOG else ThreatClass.PHYSICAL_BREACH
    if all(bands[m] == "Low" for m in MODALITY_ORDER):
        return ThreatClass.BENIGN_ANOMALY
    return ThreatClass.UNKNOWN


@dataclass(frozen=True)
class PromptTemplate:
    """Genome for prompt construction: preamble, few-shot slots, section order."""

    preamble: str
    example_slots: tuple[str, ...]
    section_order: tuple[Modality, ...] = MODALITY_ORDER
    genome_id: str = "default"

    def __post_init__(self) -> None:
        if sorted(m.value for m in self.section_order) != sorted(m.value for m in MODALITY_ORDER):
            raise SentinelError("section_order must be a permutation of the three modalities")


DEFAULT_PREAMBLE = (
    "You are a security incident analyst. Review the weighted evidence "
    "sections below and classify the incident.\n"
    "Reply with exactly two lines:\nCLASS: <token>\nNARRATIVE: <one sentence>\n"
    "Valid tokens: INTRUSION, PHYSICAL_BREACH, COORDINATED_ATTACK, "
    "BENIGN_ANOMALY, UNKNOWN."
)

DEFAULT_EXAMPLE_LIBRARY: dict[str, str] = {
    "ex-intrusion": "High log risk with repeated denied calls from one address -> CLASS: INTRUSION",
    "ex-breach": "High video risk, person in a restricted zone after hours -> CLASS: PHYSICAL_BREACH",
    "ex-coordinated": "High log and high audio risk in the same window -> CLASS: COORDINATED_ATTACK",
    "ex-benign": "All detectors low, routine activity -> CLASS: BENIGN_ANOMALY",
    "ex-alarm": "Siren detected with high classifier confidence, no other signal -> CLASS: PHYSICAL_BREACH",
    "ex-recon": "Burst of list and describe calls from a fresh address -> CLASS: INTRUSION",
    "ex-quiet": "Single medium score, nothing corroborating -> CLASS: UNKNOWN",
    "ex-multi": "Anomalies in every modality within seconds -> CLASS: COORDINATED_ATTACK",
}


def default_template() -> PromptTemplate:
    return PromptTemplate(
        preamble=DEFAULT_PREAMBLE,
        example_slots=("ex-intrusion", "ex-breach", "ex-coordinated", "ex-benign"),
    )


def load_example_library(text: str) -> dict[str, str]:
    """Parse the template library format: blocks introduced by '=== <id>'."""
    library: dict[str, str] = {}
    current: str | None = None
    lines: list[str] = []
    for line in text.splitlines():
        if line.startswith("=== "):
            if current is not None:
                library[current] = "\n".join(lines).strip()
            current = line[4:].strip()
            lines = []
        elif current is not None:
            lines.append(line)
    if current is not None:
        library[current] = "\n".join(lines).strip()
    return library


def construct_prompt(
    template: PromptTemplate,
    contexts: dict[Modality, str],
    alpha: tuple[float, ...],
    library: dict[str, str] | None = None,
) -> str:
    """Deterministic prompt: preamble, examples, then modality sections in
    descending attention order (ties broken Log < Video < Audio)."""
    library = library if library is not None else DEFAULT_EXAMPLE_LIBRARY
    weight = {m: alpha[i] for i, m in enumerate(MODALITY_ORDER)}
    ranked = sorted(
        template.section_order,
        key=lambda m: (-weight[m], MODALITY_ORDER.index(m)),
    )
    parts = [template.preamble]
    for slot in template.example_slots:
        if slot in library:
            parts.append(f"Example: {library[slot]}")
    for m in ranked:
        parts.append(f"[weight {weight[m]:.2f}] {m.value}: {contexts[m]}")
    return "\n".join(parts)


@dataclass(frozen=True)
class BackoffPolicy:
    """Exponential backoff; delays are strictly increasing despite jitter."""

    base_s: float = 0.5
    multiplier: float = 2.0
    max_retries: int = 4
    jitter: float = 0.1

    def __post_init__(self) -> None:
        if self.base_s <= 0 or self.max_retries < 0:
            raise SentinelError("backoff base must be > 0 and retries >= 0")
        if self.multiplier * (1.0 - self.jitter) <= (1.0 + self.jitter):
            raise SentinelError(
                "backoff multiplier too small for the jitter; delays would not "
                "be strictly increasing"
            )

    def delay(self, attempt: int, rng: np.random.Generator) -> float:
        nominal = self.base_s * self.multiplier**attempt
        return nominal * (1.0 + self.jitter * float(rng.uniform(-1.0, 1.0)))


@dataclass
class ReasoningContext:
    """Everything a backend may need: the prompt plus the structured scores."""

    prompt: str
    scores: dict[Modality, ThreatScore]


class DeterministicBackend:
    """Applies the rule table directly to the structured scores."""

    name = "deterministic"

    def reason(self, ctx: ReasoningContext) -> Hypothesis:
        threat_class = classify_hypothesis(ctx.scores)
        bands = {m.value: risk_band(ctx.scores[m].score) for m in MODALITY_ORDER}
        narrative = (
            f"{threat_class.value}: bands "
            + ", ".join(f"{k}={v}" for k, v in bands.items())
        )
        return Hypothesis(
            threat_class=threat_class,
            narrative=narrative,
            recommended_hint=ACTION_HINTS[threat_class],
            source=HypothesisSource.DETERMINISTIC,
        )


_CLASS_TOKENS = {
    "INTRUSION": ThreatClass.INTRUSION,
    "PHYSICAL_BREACH": ThreatClass.PHYSICAL_BREACH,
    "COORDINATED_ATTACK": ThreatClass.COORDINATED_ATTACK,
    "BENIGN_ANOMALY": ThreatClass.BENIGN_ANOMALY,
    "UNKNOWN": ThreatClass.UNKNOWN,
}


def parse_remote_reply(text: str, scores: dict[Modality, ThreatScore]) -> Hypothesis:
    """Parse the constrained reply format; reject invalid class claims.

    A COORDINATED_ATTACK claim needs at least two modalities in the High band,
    otherwise the reply is treated as unusable.
    """
    klass: ThreatClass | None = None
    narrative = ""
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.upper().startswith("CLASS:"):
            token = stripped.split(":", 1)[1].strip().upper()
            klass = _CLASS_TOKENS.get(token)
        elif stripped.upper().startswith("NARRATIVE:"):
            narrative = stripped.split(":", 1)[1].strip()
    if klass is None or not narrative:
        raise ValueError("reply does not match the CLASS/NARRATIVE format")
    if klass is ThreatClass.COORDINATED_ATTACK:
        highs = sum(1 for m in MODALITY_ORDER if scores[m].score >= HIGH_BAND)
        if highs < 2:
            raise ValueError("coordinated claim without two High modalities")
    return Hypothesis(
        threat_class=klass,
        narrative=narrative,
        recommended_hint=ACTION_HINTS[klass],
        source=HypothesisSource.REMOTE,
    )


def _default_post(url: str, payload: dict, timeout_s: float) -> dict:
    req = urllib.request.Request(
        url,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(req, timeout=timeout_s) as resp:
        return json.loads(resp.read().decode("utf-8"))


class RemoteBackend:
    """POSTs {"prompt": text} to the endpoint and expects {"text": reply}."""

    name = "remote"

    def __init__(
        self,
        url: str,
        timeout_s: float = 10.0,
        post_fn: Callable[[str, dict, float], dict] | None = None,
    ):
        self.url = url
        self.timeout_s = timeout_s
        self.post = post_fn or _default_post

    def reason(self, ctx: ReasoningContext) -> Hypothesis:
        try:
            body = self.post(self.url, {"prompt": ctx.prompt}, self.timeout_s)
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(f"remote call failed: {exc}") from exc
        if not isinstance(body, dict) or "text" not in body:
            raise ValueError("remote response missing 'text'")
        return parse_remote_reply(str(body["text"]), ctx.scores)


def reason(
    backend,
    ctx: ReasoningContext,
    backoff: BackoffPolicy,
    rng: np.random.Generator,
    sleep_fn: Callable[[float], None] = time.sleep,
) -> Hypothesis:
    """Invoke the backend with retries; fall back to the rule table on failure.

    Total attempts are bounded by max_retries + 1. The fallback hypothesis is
    tagged with the deterministic source so the journal records what decided.
    """
    if isinstance(backend, DeterministicBackend):
        return backend.reason(ctx)
    for attempt in range(backoff.max_retries + 1):
        try:
            return backend.reason(ctx)
        except (BackendUnavailable, ValueError):
            if attempt < backoff.max_retries:
                sleep_fn(backoff.delay(attempt, rng))
    return DeterministicBackend().reason(ctx)


def escalation_summary(
    h: Hypothesis, fa: FusedAssessment, key_entities: dict[str, str]
) -> str:
    """One-line operator summary for gated windows."""
    entity = next(iter(key_entities.values()), "unknown")
    entity_kind = next(iter(key_entities.keys()), "entity")
    if h.threat_class is ThreatClass.BENIGN_ANOMALY:
        return (
            f"{h.threat_class.value} (fused {fa.fused_score:.2f}): "
            "no action recommended"
        )
    hint = h.recommended_hint or "review"
    return (
        f"{h.threat_class.value} (fused {fa.fused_score:.2f}): "
        f"{entity_kind} {entity}; recommended {hint}"
    )


def count_band(scores: dict[Modality, ThreatScore], band: str) -> list[Modality]:
    return [m for m in MODALITY_ORDER if risk_band(scores[m].score) == band]



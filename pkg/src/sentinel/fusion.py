"""Attention fusion of the three per-modality threat scores, plus the gate.

Each ThreatScore is embedded as (score, confidence, recency); a single global
query (the projected mean embedding) is dotted against per-modality keys and
softmaxed into simplex weights. The fused score is the weighted sum of the
raw scores, so it always stays inside [min(scores), max(scores)] and the
strict theta gate is well defined. With zero projections the weights are
uniform, which is exactly the mean-fusion baseline.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import FusionConfig
from .core import (
    MODALITY_ORDER,
    Modality,
    SentinelError,
    ThreatScore,
    Timestamp,
    rng_for,
)

EMBED_DIM = 3  # (score, confidence, recency)


class NumericalError(SentinelError):
    """A fusion intermediate became non-finite."""


@dataclass
class FusionParams:
    w_query: np.ndarray  # (d_k, 3)
    w_key: np.ndarray    # (d_k, 3)
    d_k: int
    recency_tau_s: float = 10.0
    strategy: str = "attention"

    @classmethod
    def default(cls, cfg: FusionConfig, seed: int) -> FusionParams:
        """Deterministic seeded init: a scaled identity-like projection plus a
        small perturbation. The gain controls how sharply attention favors
        high-score, high-confidence modalities."""
        rng = rng_for(seed, "fusion-init")
        base = np.zeros((cfg.d_k, EMBED_DIM))
        for i in range(min(cfg.d_k, EMBED_DIM)):
            base[i, i] = 1.0
        noise = rng.normal(0.0, 0.01, size=(cfg.d_k, EMBED_DIM))
        w = cfg.attention_gain * base + noise
        return cls(
            w_query=w.copy(),
            w_key=w.copy(),
            d_k=cfg.d_k,
            recency_tau_s=cfg.recency_tau_s,
            strategy=cfg.strategy,
        )

    @classmethod
    def zeros(cls, d_k: int = 4, strategy: str = "attention") -> FusionParams:
        return cls(
            w_query=np.zeros((d_k, EMBED_DIM)),
            w_key=np.zeros((d_k, EMBED_DIM)),
            d_k=d_k,
            strategy=strategy,
        )

    def to_dict(self) -> dict:
        return {
            "kind": "fusion_params",
            "version": 1,
            "w_query": self.w_query.tolist(),
            "w_key": self.w_key.tolist(),
            "d_k": self.d_k,
            "recency_tau_s": self.recency_tau_s,
            "strategy": self.strategy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FusionParams:
        return cls(
            w_query=np.array(d["w_query"], dtype=float),
            w_key=np.array(d["w_key"], dtype=float),
            d_k=int(d["d_k"]),
            recency_tau_s=float(d.get("recency_tau_s", 10.0)),
            strategy=str(d.get("strategy", "attention")),
        )


def embed_modality(ts: ThreatScore, now: Timestamp, tau_s: float = 10.0) -> np.ndarray:
    """(score, confidence, recency) with recency = exp(-age / tau)."""
    age_s = max(0.0, (now - ts.produced_at).seconds)
    return np.array([ts.score, ts.confidence, math.exp(-age_s / tau_s)])


def attention_weights(params: FusionParams, embeddings: np.ndarray) -> np.ndarray:
    """Simplex weights via scaled dot-product attention with a global query.

    q = W_Q . mean(embeddings); k_i = W_K . e_i; alpha = softmax(q . k_i / sqrt(d_k)).
    """
    e = np.asarray(embeddings, dtype=float)
    if not np.all(np.isfinite(e)):
        raise NumericalError("non-finite embedding")
    q = params.w_query @ e.mean(axis=0)
    keys = e @ params.w_key.T                     # (n, d_k)
    logits = keys @ q / math.sqrt(params.d_k)
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite attention logits")
    logits = logits - logits.max()                # shift-invariant
    weights = np.exp(logits)
    alpha = weights / weights.sum()
    if not np.all(np.isfinite(alpha)):
        raise NumericalError("non-finite attention weights")
    return alpha


def strategy_weights(params: FusionParams, embeddings: np.ndarray,
                     scores: np.ndarray) -> np.ndarray:
    """Weights for the configured strategy: attention, mean, or max.

    mean is uniform; max is a one-hot on the highest raw score (ties broken
    by canonical modality order).
    """
    n = len(scores)
    if params.strategy == "mean":
        return np.full(n, 1.0 / n)
    if params.strategy == "max":
        alpha = np.zeros(n)
        alpha[int(np.argmax(scores))] = 1.0
        return alpha
    return attention_weights(params, embeddings)


@dataclass(frozen=True)
class FusedAssessment:
    window_start: Timestamp
    alpha: tuple[float, ...]
    fused_score: float
    gate_fired: bool
    score_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if abs(sum(self.alpha) - 1.0) > 1e-9:
            raise NumericalError(f"alpha must sum to 1, got {sum(self.alpha)}")


def fuse(
    scores: dict[Modality, ThreatScore],
    params: FusionParams,
    theta: float,
    now: Timestamp,
    window_start: Timestamp | None = None,
) -> FusedAssessment:
    """Convex-combine the three scores under the strategy weights; strict gate."""
    ordered = [scores[m] for m in MODALITY_ORDER]
    raw = np.array([s.score for s in ordered])
    embeddings = np.stack([embed_modality(s, now, params.recency_tau_s) for s in ordered])
    alpha = strategy_weights(params, embeddings, raw)
    fused = float(alpha @ raw)
    return FusedAssessment(
        window_start=window_start if window_start is not None else now,
        alpha=tuple(float(a) for a in alpha),
        fused_score=fused,
        gate_fired=fused > theta,
        score_ids=tuple(",".join(s.event_ids) for s in ordered),
    )


@dataclass
class BeliefState:
    """Exponentially smoothed per-modality threat belief plus recent history."""

    smoothing: float = 0.3
    history_len: int = 16
    beliefs: dict[Modality, float] = field(
        default_factory=lambda: {m: 0.0 for m in MODALITY_ORDER}
    )
    history: deque[FusedAssessment] = field(default_factory=deque)

    def update(self, fa: FusedAssessment, scores: dict[Modality, ThreatScore]) -> None:
        for m in MODALITY_ORDER:
            self.beliefs[m] = (1.0 - self.smoothing) * self.beliefs[m] + self.smoothing * scores[m].score
        self.history.append(fa)
        while len(self.history) > self.history_len:
            self.history.popleft()


def update_belief(
    belief: BeliefState, fa: FusedAssessment, scores: dict[Modality, ThreatScore]
) -> BeliefState:
    belief.update(fa, scores)
    return belief

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sentinel.config import FusionConfig
from sentinel.core import MODALITY_ORDER, Modality, ThreatScore, Timestamp
from sentinel.fusion import (
    BeliefState,
    FusedAssessment,
    FusionParams,
    attention_weights,
    embed_modality,
    fuse,
    strategy_weights,
    update_belief,
)

NOW = Timestamp.from_seconds(50.0)


def score(modality, value, confidence=0.8, age_s=0.0):
    return ThreatScore(
        modality=modality,
        score=value,
        confidence=confidence,
        explanation="x",
        event_ids=("e1",),
        produced_at=Timestamp.from_seconds(NOW.seconds - age_s),
    )


def score_map(log, video, audio, confidence=0.8):
    return {
        Modality.LOG: score(Modality.LOG, log, confidence),
        Modality.VIDEO: score(Modality.VIDEO, video, confidence),
        Modality.AUDIO: score(Modality.AUDIO, audio, confidence),
    }


class TestEmbedding:
    def test_fresh_score(self):
        e = embed_modality(score(Modality.LOG, 0.8, confidence=1.0), NOW)
        assert np.allclose(e, [0.8, 1.0, 1.0])

    def test_recency_at_tau_is_inverse_e(self):
        e = embed_modality(score(Modality.LOG, 0.5, age_s=10.0), NOW, tau_s=10.0)
        assert e[2] == pytest.approx(math.exp(-1.0))

    def test_recency_vanishes_with_age(self):
        old = ThreatScore(Modality.LOG, 0.5, 0.8, "x", ("e",), Timestamp(0))
        e = embed_modality(old, Timestamp.from_seconds(10_000.0), tau_s=10.0)
        assert e[2] == pytest.approx(0.0, abs=1e-12)


class TestAttention:
    def test_identical_embeddings_uniform(self):
        params = FusionParams.default(FusionConfig(), seed=3)
        e = np.tile([0.4, 0.6, 1.0], (3, 1))
        alpha = attention_weights(params, e)
        assert np.allclose(alpha, [1 / 3, 1 / 3, 1 / 3])

    def test_zero_projections_uniform(self):
        params = FusionParams.zeros()
        e = np.array([[0.9, 0.9, 1.0], [0.2, 0.1, 1.0], [0.5, 0.4, 0.2]])
        alpha = attention_weights(params, e)
        assert np.allclose(alpha, [1 / 3, 1 / 3, 1 / 3])

    def test_hand_computed_two_modalities(self):
        params = FusionParams(
            w_query=np.eye(3), w_key=np.eye(3), d_k=3
        )
        e = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        # q = (0.5, 0, 0); logits = (0.5/sqrt(3), 0)
        logit = 0.5 / math.sqrt(3.0)
        expected = np.exp([logit, 0.0])
        expected /= expected.sum()
        alpha = attention_weights(params, e)
        assert np.allclose(alpha, expected, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6))
    def test_alpha_on_simplex_random_draws(self, seed):
        rng = np.random.default_rng(seed)
        params = FusionParams(
            w_query=rng.normal(size=(4, 3)), w_key=rng.normal(size=(4, 3)), d_k=4
        )
        e = rng.uniform(0.0, 1.0, size=(3, 3))
        alpha = attention_weights(params, e)
        assert abs(alpha.sum() - 1.0) < 1e-9
        assert np.all(alpha >= 0.0)

    def test_shift_invariance_of_softmax(self):
        # adding a constant to every logit must not change alpha; the
        # implementation subtracts the max, so verify via a direct construct
        rng = np.random.default_rng(0)
        logits = rng.normal(size=3)
        for shift in (0.0, 5.0, -11.0):
            shifted = logits + shift
            a = np.exp(shifted - shifted.max())
            a /= a.sum()
            b = np.exp(logits - logits.max())
            b /= b.sum()
            assert np.allclose(a, b, atol=1e-12)

    def test_higher_score_and_confidence_get_more_weight(self):
        params = FusionParams.default(FusionConfig(), seed=3)
        e = np.array([[0.9, 0.9, 1.0], [0.3, 0.3, 1.0], [0.3, 0.3, 1.0]])
        alpha = attention_weights(params, e)
        assert alpha[0] > alpha[1]
        assert alpha[0] > 1 / 3


class TestFuse:
    def test_equal_scores_any_alpha(self):
        params = FusionParams.default(FusionConfig(), seed=5)
        fa = fuse(score_map(0.9, 0.9, 0.9), params, theta=0.7, now=NOW)
        assert fa.fused_score == pytest.approx(0.9)
        assert fa.gate_fired

    def test_zero_scores_silent(self):
        params = FusionParams.default(FusionConfig(), seed=5)
        fa = fuse(score_map(0.0, 0.0, 0.0), params, theta=0.7, now=NOW)
        assert fa.fused_score == pytest.approx(0.0)
        assert not fa.gate_fired

    def test_fused_within_score_envelope(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            params = FusionParams(
                w_query=rng.normal(size=(4, 3)),
                w_key=rng.normal(size=(4, 3)),
                d_k=4,
            )
            vals = rng.uniform(size=3)
            fa = fuse(score_map(*vals), params, theta=0.7, now=NOW)
            assert min(vals) - 1e-12 <= fa.fused_score <= max(vals) + 1e-12

    def test_gate_strictness_at_theta(self):
        params = FusionParams.zeros()
        fa = fuse(score_map(0.7, 0.7, 0.7), params, theta=0.7, now=NOW)
        assert fa.fused_score == pytest.approx(0.7)
        assert not fa.gate_fired  # boundary does not fire

    def test_hand_fused_value(self):
        params = FusionParams(w_query=np.eye(3), w_key=np.eye(3), d_k=3)
        scores = score_map(0.5, 0.95, 0.9, confidence=0.8)
        fa = fuse(scores, params, theta=0.7, now=NOW)
        e = np.stack([
            embed_modality(scores[m], NOW, params.recency_tau_s) for m in MODALITY_ORDER
        ])
        q = params.w_query @ e.mean(axis=0)
        logits = (e @ params.w_key.T) @ q / math.sqrt(3.0)
        expected_alpha = np.exp(logits - logits.max())
        expected_alpha /= expected_alpha.sum()
        expected_f = float(expected_alpha @ np.array([0.5, 0.95, 0.9]))
        assert fa.fused_score == pytest.approx(expected_f, abs=1e-12)
        assert fa.gate_fired == (expected_f > 0.7)

    def test_mean_strategy_equals_uniform(self):
        params = FusionParams.zeros(strategy="mean")
        vals = (0.2, 0.8, 0.5)
        fa = fuse(score_map(*vals), params, theta=0.7, now=NOW)
        assert fa.fused_score == pytest.approx(sum(vals) / 3)

    def test_max_strategy_one_hot(self):
        alpha = strategy_weights(
            FusionParams.zeros(strategy="max"),
            np.zeros((3, 3)),
            np.array([0.2, 0.9, 0.4]),
        )
        assert list(alpha) == [0.0, 1.0, 0.0]

    def test_alpha_sum_validated(self):
        with pytest.raises(Exception):
            FusedAssessment(NOW, (0.5, 0.2, 0.1), 0.5, False, ("", "", ""))


class TestBelief:
    def test_single_smoothing_step(self):
        belief = BeliefState(smoothing=0.3)
        fa = fuse(score_map(1.0, 1.0, 1.0), FusionParams.zeros(), 0.7, NOW)
        update_belief(belief, fa, score_map(1.0, 1.0, 1.0))
        assert belief.beliefs[Modality.LOG] == pytest.approx(0.3)

    def test_converges_to_constant_scores(self):
        belief = BeliefState(smoothing=0.3)
        scores = score_map(0.6, 0.6, 0.6)
        fa = fuse(scores, FusionParams.zeros(), 0.7, NOW)
        for _ in range(80):
            update_belief(belief, fa, scores)
        assert belief.beliefs[Modality.AUDIO] == pytest.approx(0.6, abs=1e-9)

    def test_history_ring_eviction(self):
        belief = BeliefState(history_len=16)
        scores = score_map(0.1, 0.1, 0.1)
        first = fuse(scores, FusionParams.zeros(), 0.7, Timestamp.from_seconds(0.0))
        update_belief(belief, first, scores)
        for i in range(1, 17):
            fa = fuse(scores, FusionParams.zeros(), 0.7, Timestamp.from_seconds(float(i)))
            update_belief(belief, fa, scores)
        assert len(belief.history) == 16
        assert belief.history[0].window_start == Timestamp.from_seconds(1.0)

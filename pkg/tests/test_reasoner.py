import itertools

import numpy as np
import pytest

from sentinel.core import MODALITY_ORDER, Modality, ThreatScore, Timestamp, rng_for
from sentinel.fusion import FusionParams, fuse
from sentinel.prompt_ga import ga_optimize_templates
from sentinel.reasoner import (
    BackendUnavailable,
    BackoffPolicy,
    DEFAULT_EXAMPLE_LIBRARY,
    DeterministicBackend,
    HypothesisSource,
    PromptTemplate,
    ReasoningContext,
    RemoteBackend,
    ThreatClass,
    classify_hypothesis,
    construct_prompt,
    default_template,
    escalation_summary,
    load_example_library,
    reason,
)
from sentinel.detectors import InsufficientData

NOW = Timestamp.from_seconds(10.0)

BAND_VALUES = {"Low": 0.1, "Medium": 0.5, "High": 0.9}


def scores_for(bands):
    return {
        m: ThreatScore(m, BAND_VALUES[band], 0.8, "ctx", ("e",), NOW)
        for m, band in zip(MODALITY_ORDER, bands)
    }


class TestClassify:
    def test_rule_table_examples(self):
        assert classify_hypothesis(scores_for(("High", "High", "Low"))) is ThreatClass.COORDINATED_ATTACK
        assert classify_hypothesis(scores_for(("High", "Low", "Low"))) is ThreatClass.INTRUSION
        assert classify_hypothesis(scores_for(("Low", "High", "Low"))) is ThreatClass.PHYSICAL_BREACH
        assert classify_hypothesis(scores_for(("Low", "Low", "High"))) is ThreatClass.PHYSICAL_BREACH
        assert classify_hypothesis(scores_for(("Low", "Low", "Low"))) is ThreatClass.BENIGN_ANOMALY
        assert classify_hypothesis(scores_for(("Medium", "Medium", "Medium"))) is ThreatClass.UNKNOWN
        assert classify_hypothesis(scores_for(("High", "High", "High"))) is ThreatClass.COORDINATED_ATTACK

    def test_total_over_all_band_combinations(self):
        for bands in itertools.product(("Low", "Medium", "High"), repeat=3):
            result = classify_hypothesis(scores_for(bands))
            highs = bands.count("High")
            if highs >= 2:
                assert result is ThreatClass.COORDINATED_ATTACK
            elif highs == 1:
                expected = (
                    ThreatClass.INTRUSION if bands[0] == "High" else ThreatClass.PHYSICAL_BREACH
                )
                assert result is expected
            elif all(b == "Low" for b in bands):
                assert result is ThreatClass.BENIGN_ANOMALY
            else:
                assert result is ThreatClass.UNKNOWN


class TestPrompt:
    def contexts(self):
        return {
            Modality.LOG: "log context",
            Modality.VIDEO: "video context",
            Modality.AUDIO: "audio context",
        }

    def test_sections_sorted_by_weight(self):
        prompt = construct_prompt(default_template(), self.contexts(), (0.1, 0.7, 0.2))
        video_pos = prompt.index("video:")
        audio_pos = prompt.index("audio:")
        log_pos = prompt.index("log:")
        assert video_pos < audio_pos < log_pos
        assert "[weight 0.70] video" in prompt

    def test_tie_break_modality_order(self):
        third = 1.0 / 3.0
        prompt = construct_prompt(default_template(), self.contexts(), (third, third, third))
        assert prompt.index("log:") < prompt.index("video:") < prompt.index("audio:")

    def test_deterministic(self):
        a = construct_prompt(default_template(), self.contexts(), (0.2, 0.5, 0.3))
        b = construct_prompt(default_template(), self.contexts(), (0.2, 0.5, 0.3))
        assert a == b

    def test_examples_included_in_slot_order(self):
        template = PromptTemplate(
            preamble="P", example_slots=("ex-benign", "ex-intrusion")
        )
        prompt = construct_prompt(template, self.contexts(), (0.5, 0.3, 0.2))
        assert prompt.index(DEFAULT_EXAMPLE_LIBRARY["ex-benign"]) < prompt.index(
            DEFAULT_EXAMPLE_LIBRARY["ex-intrusion"]
        )

    def test_library_file_round_trip(self):
        text = "=== a\nfirst example\n\n=== b\nsecond\nexample\n"
        lib = load_example_library(text)
        assert lib == {"a": "first example", "b": "second\nexample"}


class TestBackoff:
    def test_delays_strictly_increasing(self):
        policy = BackoffPolicy()
        rng = rng_for(1, "backoff")
        delays = [policy.delay(i, rng) for i in range(5)]
        assert all(b > a for a, b in zip(delays, delays[1:]))

    def test_delay_within_jitter_envelope(self):
        policy = BackoffPolicy(base_s=0.5, multiplier=2.0, jitter=0.1)
        rng = rng_for(2, "backoff")
        for attempt in range(4):
            nominal = 0.5 * 2.0**attempt
            d = policy.delay(attempt, rng)
            assert nominal * 0.9 <= d <= nominal * 1.1

    def test_invalid_policy_rejected(self):
        with pytest.raises(Exception):
            BackoffPolicy(multiplier=1.0, jitter=0.5)


class FlakyRemote:
    """Remote double: configurable sequence of replies / errors."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def __call__(self, url, payload, timeout):
        self.calls += 1
        item = self.replies.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class TestReason:
    def ctx(self, bands=("High", "High", "Low")):
        scores = scores_for(bands)
        return ReasoningContext(prompt="p", scores=scores)

    def test_deterministic_backend(self):
        h = reason(DeterministicBackend(), self.ctx(), BackoffPolicy(), rng_for(1, "r"))
        assert h.threat_class is ThreatClass.COORDINATED_ATTACK
        assert h.source is HypothesisSource.DETERMINISTIC

    def test_all_low_is_benign(self):
        h = reason(DeterministicBackend(), self.ctx(("Low", "Low", "Low")),
                   BackoffPolicy(), rng_for(1, "r"))
        assert h.threat_class is ThreatClass.BENIGN_ANOMALY

    def test_remote_success(self):
        post = FlakyRemote([{"text": "CLASS: INTRUSION\nNARRATIVE: bad login burst"}])
        backend = RemoteBackend("http://example.test", post_fn=post)
        h = reason(backend, self.ctx(("High", "Low", "Low")), BackoffPolicy(), rng_for(1, "r"),
                   sleep_fn=lambda s: None)
        assert h.threat_class is ThreatClass.INTRUSION
        assert h.source is HypothesisSource.REMOTE

    def test_unparseable_then_retry_then_fallback(self):
        post = FlakyRemote([{"text": "garbage"}, {"text": "more garbage"}])
        backend = RemoteBackend("http://example.test", post_fn=post)
        policy = BackoffPolicy(max_retries=1)
        h = reason(backend, self.ctx(), policy, rng_for(1, "r"), sleep_fn=lambda s: None)
        assert post.calls == 2  # one retry
        assert h.source is HypothesisSource.DETERMINISTIC

    def test_unreachable_falls_back(self):
        post = FlakyRemote([OSError("refused")] * 5)
        backend = RemoteBackend("http://example.test", post_fn=post)
        h = reason(backend, self.ctx(), BackoffPolicy(max_retries=4), rng_for(1, "r"),
                   sleep_fn=lambda s: None)
        assert post.calls == 5  # max_retries + 1 attempts
        assert h.source is HypothesisSource.DETERMINISTIC

    def test_coordinated_claim_rejected_without_two_highs(self):
        post = FlakyRemote([
            {"text": "CLASS: COORDINATED_ATTACK\nNARRATIVE: sure"},
            {"text": "CLASS: UNKNOWN\nNARRATIVE: fine"},
        ])
        backend = RemoteBackend("http://example.test", post_fn=post)
        h = reason(backend, self.ctx(("High", "Low", "Low")), BackoffPolicy(max_retries=1),
                   rng_for(1, "r"), sleep_fn=lambda s: None)
        assert h.threat_class is ThreatClass.UNKNOWN


class TestEscalation:
    def fa(self, value=0.85):
        scores = scores_for(("High", "High", "Low"))
        return fuse(scores, FusionParams.zeros(), 0.7, NOW)

    def test_contains_entity(self):
        h = DeterministicBackend().reason(
            ReasoningContext("p", scores_for(("High", "High", "Low")))
        )
        text = escalation_summary(h, self.fa(), {"source_ip": "5.205.62.253"})
        assert "5.205.62.253" in text
        assert "CoordinatedAttack" in text

    def test_benign_recommends_nothing(self):
        h = DeterministicBackend().reason(
            ReasoningContext("p", scores_for(("Low", "Low", "Low")))
        )
        text = escalation_summary(h, self.fa(), {"source_ip": "1.2.3.4"})
        assert "no action recommended" in text

    def test_deterministic_across_runs(self):
        h = DeterministicBackend().reason(
            ReasoningContext("p", scores_for(("High", "Low", "Low")))
        )
        a = escalation_summary(h, self.fa(), {"source_ip": "9.9.9.9"})
        b = escalation_summary(h, self.fa(), {"source_ip": "9.9.9.9"})
        assert a == b


class TestGa:
    def test_constant_fitness(self):
        result = ga_optimize_templates(
            DEFAULT_EXAMPLE_LIBRARY, lambda t: 0.25, generations=5, pop_size=8,
            rng=rng_for(1, "ga"),
        )
        assert result.best_fitness == 0.25

    def test_slot_count_fitness_converges(self):
        result = ga_optimize_templates(
            DEFAULT_EXAMPLE_LIBRARY,
            lambda t: float(len(t.example_slots)),
            generations=20,
            pop_size=16,
            rng=rng_for(2, "ga"),
            n_shot=4,
        )
        assert len(result.best.example_slots) == 4

    def test_best_fitness_monotone(self):
        rng = rng_for(3, "ga")
        noise = {"state": 0}

        def jittery(t):
            noise["state"] += 1
            return (noise["state"] * 7919) % 97 / 97.0

        result = ga_optimize_templates(
            DEFAULT_EXAMPLE_LIBRARY, jittery, generations=15, pop_size=8, rng=rng,
        )
        assert all(b >= a for a, b in zip(result.history, result.history[1:]))

    def test_fixed_seed_identical_trace(self):
        def fitness(t):
            return float(len(t.example_slots)) + 0.1 * len(set(t.example_slots))

        r1 = ga_optimize_templates(DEFAULT_EXAMPLE_LIBRARY, fitness, 10, 8, rng_for(4, "ga"))
        r2 = ga_optimize_templates(DEFAULT_EXAMPLE_LIBRARY, fitness, 10, 8, rng_for(4, "ga"))
        assert r1.history == r2.history
        assert r1.best == r2.best

    def test_empty_library_rejected(self):
        with pytest.raises(InsufficientData):
            ga_optimize_templates({}, lambda t: 0.0, 5, 8, rng_for(5, "ga"))

import math

import pytest
from hypothesis import given, strategies as st

from sentinel.core import (
    Duration,
    InvalidValue,
    DegenerateRange,
    Modality,
    AudioFeatures,
    ThreatScore,
    Timestamp,
    clamp_unit,
    minmax_normalize,
    risk_band,
    rng_for,
)


def test_clamp_unit_examples():
    assert clamp_unit(0.5) == 0.5
    assert clamp_unit(-3.2) == 0.0
    assert clamp_unit(1.7) == 1.0


def test_clamp_unit_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(InvalidValue):
            clamp_unit(bad)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_clamp_unit_idempotent(x):
    assert clamp_unit(clamp_unit(x)) == clamp_unit(x)


def test_minmax_examples():
    assert minmax_normalize(5, 0, 10) == 0.5
    assert minmax_normalize(0, 0, 10) == 0.0
    assert minmax_normalize(12, 0, 10) == 1.0


def test_minmax_degenerate_range():
    with pytest.raises(DegenerateRange):
        minmax_normalize(1, 3, 3)
    with pytest.raises(DegenerateRange):
        minmax_normalize(1, 4, 3)


def test_timestamp_total_order_and_arithmetic():
    a = Timestamp.from_seconds(1.0)
    b = Timestamp.from_seconds(2.5)
    assert a < b
    assert (b - a).seconds == pytest.approx(1.5)
    assert a + Duration.from_seconds(1.5) == b
    with pytest.raises(InvalidValue):
        Timestamp(-1)


@given(
    st.integers(min_value=-10**12, max_value=10**12),
    st.integers(min_value=-10**12, max_value=10**12),
    st.integers(min_value=-10**12, max_value=10**12),
)
def test_duration_addition_associative(a, b, c):
    da, db, dc = Duration(a), Duration(b), Duration(c)
    assert (da + db) + dc == da + (db + dc)


@given(
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
)
def test_threat_score_always_in_unit_interval(score, confidence):
    ts = ThreatScore(
        modality=Modality.LOG,
        score=score,
        confidence=confidence,
        explanation="x",
        event_ids=(),
        produced_at=Timestamp(0),
    )
    assert 0.0 <= ts.score <= 1.0
    assert 0.0 <= ts.confidence <= 1.0


def test_threat_score_requires_explanation():
    with pytest.raises(InvalidValue):
        ThreatScore(Modality.LOG, 0.5, 0.5, "", (), Timestamp(0))


def test_audio_features_confidence_bounds():
    with pytest.raises(InvalidValue):
        AudioFeatures("c", Timestamp(0), "siren", 1.2, (0.0,))


def test_risk_bands_left_closed():
    assert risk_band(0.0) == "Low"
    assert risk_band(0.39999) == "Low"
    assert risk_band(0.4) == "Medium"
    assert risk_band(0.69999) == "Medium"
    assert risk_band(0.7) == "High"
    assert risk_band(1.0) == "High"


def test_rng_for_is_deterministic_and_component_scoped():
    a1 = rng_for(7, "x").integers(0, 1_000_000, size=4)
    a2 = rng_for(7, "x").integers(0, 1_000_000, size=4)
    b = rng_for(7, "y").integers(0, 1_000_000, size=4)
    assert list(a1) == list(a2)
    assert list(a1) != list(b)
    assert not math.isnan(rng_for(7, "x").uniform())

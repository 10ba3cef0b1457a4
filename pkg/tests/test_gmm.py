import numpy as np
import pytest

from sentinel.core import rng_for
from sentinel.detectors import DimensionError, InsufficientData, gmm_fit_em, gmm_nll, gmm_score
from sentinel.detectors.gmm import log_likelihoods, responsibilities


def test_k1_closed_form():
    rng = rng_for(1, "gmm-k1")
    data = rng.normal(loc=3.0, scale=2.0, size=(200, 3))
    model = gmm_fit_em(data, k=1, rng=rng_for(1, "fit"))
    assert np.allclose(model.means[0], data.mean(axis=0), atol=1e-9)
    assert np.allclose(model.variances[0], data.var(axis=0), atol=1e-9)
    assert model.weights[0] == pytest.approx(1.0)


def test_two_separated_clusters():
    rng = rng_for(2, "gmm-sep")
    a = rng.normal(loc=-5.0, scale=0.5, size=(150, 2))
    b = rng.normal(loc=5.0, scale=0.5, size=(150, 2))
    data = np.vstack([a, b])
    model = gmm_fit_em(data, k=2, rng=rng_for(2, "fit"))
    centers = sorted(model.means[:, 0])
    assert centers[0] == pytest.approx(-5.0, abs=0.1)
    assert centers[1] == pytest.approx(5.0, abs=0.1)


def test_em_loglik_monotone():
    rng = rng_for(3, "gmm-mono")
    for trial in range(5):
        data = rng.normal(size=(60, 2)) + rng.integers(0, 3) * 2
        trace: list[float] = []
        gmm_fit_em(data, k=3, max_iters=50, tol=0.0, rng=rng_for(trial, "fit"),
                   track_loglik=trace)
        for prev, cur in zip(trace, trace[1:]):
            assert cur >= prev - 1e-9


def test_responsibilities_sum_to_one_and_weights_simplex():
    rng = rng_for(4, "gmm-resp")
    data = rng.normal(size=(80, 3))
    model = gmm_fit_em(data, k=4, rng=rng_for(4, "fit"))
    resp = responsibilities(model, data)
    assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-9)
    assert model.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(model.weights >= 0.0)
    assert np.all(model.variances >= 1e-6)


def test_mode_scores_lower_than_tail():
    rng = rng_for(5, "gmm-mode")
    data = rng.normal(loc=0.0, scale=1.0, size=(300, 2))
    model = gmm_fit_em(data, k=1, rng=rng_for(5, "fit"))
    at_mean = gmm_score(model, model.means[0])
    train_scores = [gmm_score(model, row) for row in data]
    assert at_mean <= max(train_scores)
    far = model.means[0] + 10.0  # ten sigma out
    assert gmm_nll(model, far) > model.nll_hi
    assert gmm_score(model, far) == 1.0


def test_monotone_in_nll():
    rng = rng_for(6, "gmm-monotone")
    data = rng.normal(size=(100, 2))
    model = gmm_fit_em(data, k=1, rng=rng_for(6, "fit"))
    steps = [model.means[0] + r for r in (0.0, 1.0, 2.0, 4.0, 8.0)]
    scores = [gmm_score(model, s) for s in steps]
    assert scores == sorted(scores)


def test_insufficient_data_and_dim_mismatch():
    with pytest.raises(InsufficientData):
        gmm_fit_em(np.zeros((2, 3)), k=3)
    model = gmm_fit_em(rng_for(7, "d").normal(size=(30, 2)), k=2, rng=rng_for(7, "f"))
    with pytest.raises(DimensionError):
        gmm_score(model, [1.0, 2.0, 3.0])


def test_fixed_seed_identical_fit_and_scores():
    data = rng_for(8, "d").normal(size=(90, 4))
    m1 = gmm_fit_em(data, k=3, rng=rng_for(8, "f"))
    m2 = gmm_fit_em(data, k=3, rng=rng_for(8, "f"))
    assert np.array_equal(m1.means, m2.means)
    assert np.array_equal(m1.variances, m2.variances)
    assert np.array_equal(m1.weights, m2.weights)
    x = data[0]
    assert gmm_score(m1, x) == gmm_score(m2, x)


def test_loglik_finite_on_floored_variance():
    data = np.zeros((10, 2))  # fully degenerate; variance floor must hold
    model = gmm_fit_em(data, k=1, rng=rng_for(9, "f"))
    assert np.all(model.variances == 1e-6)
    assert np.isfinite(log_likelihoods(model, data)).all()

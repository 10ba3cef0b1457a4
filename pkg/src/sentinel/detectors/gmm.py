"""Diagonal-covariance Gaussian mixture for audio-clip embeddings.

Standard EM with a k-means++-style seeded initialization. Responsibilities
are computed in log space; variances are floored to keep components from
collapsing onto single points. Scores are negative log-likelihood normalized
against the training range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import minmax_normalize
from .errors import DimensionError, InsufficientData

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmModel:
    weights: np.ndarray    # (K,), on the simplex
    means: np.ndarray      # (K, d)
    variances: np.ndarray  # (K, d), diagonal, >= var_floor
    nll_lo: float
    nll_hi: float

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def to_dict(self) -> dict:
        return {
            "kind": "gmm",
            "version": 1,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "nll_lo": self.nll_lo,
            "nll_hi": self.nll_hi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GmmModel:
        return cls(
            weights=np.array(d["weights"], dtype=float),
            means=np.array(d["means"], dtype=float),
            variances=np.array(d["variances"], dtype=float),
            nll_lo=float(d["nll_lo"]),
            nll_hi=float(d["nll_hi"]),
        )


def _log_component_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """log [pi_k N(x_i | mu_k, diag sigma2_k)] for all i, k -> (n, K)."""
    diff = x[:, None, :] - model.means[None, :, :]          # (n, K, d)
    quad = np.sum(diff**2 / model.variances[None, :, :], axis=2)
    logdet = np.sum(np.log(model.variances), axis=1)        # (K,)
    d = x.shape[1]
    return np.log(model.weights)[None, :] - 0.5 * (d * LOG_2PI + logdet[None, :] + quad)


def log_likelihoods(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Per-point log p(x_i | model) via logsumexp over components."""
    comp = _log_component_densities(model, x)
    peak = comp.max(axis=1, keepdims=True)
    return (peak + np.log(np.sum(np.exp(comp - peak), axis=1, keepdims=True)))[:, 0]


def responsibilities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    comp = _log_component_densities(model, x)
    peak = comp.max(axis=1, keepdims=True)
    unnorm = np.exp(comp - peak)
    return unnorm / unnorm.sum(axis=1, keepdims=True)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy spread-out seeding: each next center sampled proportionally to
    squared distance from the nearest chosen center."""
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min(
            np.stack([np.sum((x - c) ** 2, axis=1) for c in centers]), axis=0
        )
        total = d2.sum()
        if total <= 0.0:
            centers.append(x[int(rng.integers(n))])
            continue
        centers.append(x[int(rng.choice(n, p=d2 / total))])
    return np.stack(centers)


def gmm_fit_em(clips, k: int, max_iters: int = 100, tol: float = 1e-6,
               var_floor: float = 1e-6, rng: np.random.Generator | None = None,
               track_loglik: list | None = None) -> GmmModel:
    """Fit by EM; total log-likelihood is non-decreasing (within 1e-9) per step."""
    x = np.asarray(clips, dtype=float)
    if x.ndim != 2 or x.shape[0] < k:
        raise InsufficientData(f"need at least k={k} clips, got shape {x.shape}")
    n, d = x.shape
    rng = rng or np.random.default_rng(0)

    means = _kmeanspp_init(x, k, rng)
    global_var = np.maximum(x.var(axis=0), var_floor)
    model = GmmModel(
        weights=np.full(k, 1.0 / k),
        means=means,
        variances=np.tile(global_var, (k, 1)),
        nll_lo=0.0,
        nll_hi=1.0,
    )

    prev_ll = -np.inf
    for _ in range(max_iters):
        resp = responsibilities(model, x)                    # E step
        ll = float(np.sum(log_likelihoods(model, x)))
        if track_loglik is not None:
            track_loglik.append(ll)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll

        nk = resp.sum(axis=0)                                # M step
        nk = np.maximum(nk, 1e-300)
        model.weights = nk / n
        model.means = (resp.T @ x) / nk[:, None]
        diff2 = (x[:, None, :] - model.means[None, :, :]) ** 2
        var = np.einsum("nk,nkd->kd", resp, diff2) / nk[:, None]
        model.variances = np.maximum(var, var_floor)

    nll = -log_likelihoods(model, x)
    nll_lo = float(nll.min())
    nll_hi = float(nll.max())
    if nll_hi <= nll_lo:
        nll_hi = nll_lo + 1e-12
    model.nll_lo = nll_lo
    model.nll_hi = nll_hi
    return model


def gmm_nll(model: GmmModel, x) -> float:
    vec = np.asarray(x, dtype=float)
    if vec.shape != (model.dim,):
        raise DimensionError(f"expected dim {model.dim}, got shape {vec.shape}")
    return float(-log_likelihoods(model, vec[None, :])[0])


def gmm_score(model: GmmModel, x) -> float:
    """Negative log-likelihood normalized against the training range."""
    return minmax_normalize(gmm_nll(model, x), model.nll_lo, model.nll_hi)

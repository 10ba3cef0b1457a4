"""Linear autoencoder scoring frame embeddings by reconstruction error.

Kept linear on purpose: full-batch gradient descent is exact, gradient checks
are cheap, and the reconstruction-error mechanism is unchanged. The learning
rate halves whenever a step would increase the loss, which guarantees a
non-increasing training curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import minmax_normalize
from .errors import DimensionError, InsufficientData, RankError


@dataclass
class AutoencoderModel:
    w_enc: np.ndarray  # (k, d)
    w_dec: np.ndarray  # (d, k)
    b_enc: np.ndarray  # (k,)
    b_dec: np.ndarray  # (d,)
    err_lo: float
    err_hi: float

    @property
    def dim(self) -> int:
        return self.w_enc.shape[1]

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        code = x @ self.w_enc.T + self.b_enc
        return code @ self.w_dec.T + self.b_dec

    def to_dict(self) -> dict:
        return {
            "kind": "autoencoder",
            "version": 1,
            "w_enc": self.w_enc.tolist(),
            "w_dec": self.w_dec.tolist(),
            "b_enc": self.b_enc.tolist(),
            "b_dec": self.b_dec.tolist(),
            "err_lo": self.err_lo,
            "err_hi": self.err_hi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> AutoencoderModel:
        return cls(
            w_enc=np.array(d["w_enc"], dtype=float),
            w_dec=np.array(d["w_dec"], dtype=float),
            b_enc=np.array(d["b_enc"], dtype=float),
            b_dec=np.array(d["b_dec"], dtype=float),
            err_lo=float(d["err_lo"]),
            err_hi=float(d["err_hi"]),
        )


def loss_and_grads(params: AutoencoderModel, x: np.ndarray):
    """Mean squared reconstruction error and its analytic gradients.

    loss = mean_i || x_i - dec(enc(x_i)) ||^2. Gradients are exact for the
    linear model; the finite-difference check in the test suite holds them to
    relative 1e-4.
    """
    n = x.shape[0]
    code = x @ params.w_enc.T + params.b_enc  # (n, k)
    recon = code @ params.w_dec.T + params.b_dec  # (n, d)
    resid = recon - x
    loss = float(np.mean(np.sum(resid**2, axis=1)))

    # d loss / d recon = 2 resid / n
    g_recon = 2.0 * resid / n
    g_wdec = g_recon.T @ code
    g_bdec = g_recon.sum(axis=0)
    g_code = g_recon @ params.w_dec
    g_wenc = g_code.T @ x
    g_benc = g_code.sum(axis=0)
    return loss, (g_wenc, g_wdec, g_benc, g_bdec)


def ae_fit(frames, k: int, epochs: int = 200, lr: float = 0.05,
           rng: np.random.Generator | None = None,
           track_loss: list | None = None) -> AutoencoderModel:
    """Train by full-batch gradient descent; calibrate on training errors."""
    x = np.asarray(frames, dtype=float)
    if x.ndim != 2:
        raise InsufficientData(f"expected 2-d training data, got shape {x.shape}")
    n, d = x.shape
    if k >= d:
        raise RankError(f"bottleneck k={k} must be < input dim {d}")
    if n < k:
        raise InsufficientData(f"need at least k={k} frames, got {n}")

    rng = rng or np.random.default_rng(0)
    scale = 1.0 / np.sqrt(d)
    model = AutoencoderModel(
        w_enc=rng.normal(0.0, scale, size=(k, d)),
        w_dec=rng.normal(0.0, scale, size=(d, k)),
        b_enc=np.zeros(k),
        b_dec=np.zeros(d),
        err_lo=0.0,
        err_hi=1.0,
    )

    loss, grads = loss_and_grads(model, x)
    step = lr
    for _ in range(epochs):
        proposal = AutoencoderModel(
            w_enc=model.w_enc - step * grads[0],
            w_dec=model.w_dec - step * grads[1],
            b_enc=model.b_enc - step * grads[2],
            b_dec=model.b_dec - step * grads[3],
            err_lo=0.0,
            err_hi=1.0,
        )
        new_loss, new_grads = loss_and_grads(proposal, x)
        if new_loss <= loss + 1e-9:
            model, loss, grads = proposal, new_loss, new_grads
            step *= 1.05
        else:
            step *= 0.5  # reject the step; retry smaller
        if track_loss is not None:
            track_loss.append(loss)

    errors = np.sum((model.reconstruct(x) - x) ** 2, axis=1)
    err_lo = float(errors.min())
    err_hi = float(errors.max())
    if err_hi <= err_lo:
        err_hi = err_lo + 1e-12  # degenerate training set; keep the range valid
    model.err_lo = err_lo
    model.err_hi = err_hi
    return model


def ae_raw_error(model: AutoencoderModel, x) -> float:
    vec = np.asarray(x, dtype=float)
    if vec.shape != (model.dim,):
        raise DimensionError(f"expected dim {model.dim}, got shape {vec.shape}")
    resid = model.reconstruct(vec[None, :])[0] - vec
    return float(np.sum(resid**2))


def ae_score(model: AutoencoderModel, x) -> float:
    """Reconstruction error normalized against the training min/max range."""
    return minmax_normalize(ae_raw_error(model, x), model.err_lo, model.err_hi)

"""Per-modality anomaly detectors: isolation forest, linear autoencoder, GMM."""

from .errors import DimensionError, InsufficientData, RankError
from .iforest import IsolationForestModel, iforest_fit, iforest_score, iforest_score_detail
from .autoencoder import AutoencoderModel, ae_fit, ae_score, ae_raw_error
from .gmm import GmmModel, gmm_fit_em, gmm_score, gmm_nll

__all__ = [
    "DimensionError",
    "InsufficientData",
    "RankError",
    "IsolationForestModel",
    "iforest_fit",
    "iforest_score",
    "iforest_score_detail",
    "AutoencoderModel",
    "ae_fit",
    "ae_score",
    "ae_raw_error",
    "GmmModel",
    "gmm_fit_em",
    "gmm_score",
    "gmm_nll",
]

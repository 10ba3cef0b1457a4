"""Errors shared by the detector implementations."""

from __future__ import annotations

from ..core import SentinelError


class InsufficientData(SentinelError):
    """Too few training points for the requested model."""


class DimensionError(SentinelError):
    """Input vector dimension does not match the fitted model."""


class RankError(SentinelError):
    """Autoencoder bottleneck must be strictly smaller than the input dim."""

"""Multimodal security sentinel.

Three per-modality anomaly agents feed an attention-based fusion gate; gated
windows flow through a pluggable reasoner and a Q-learning responder with an
auditable, reversible action journal. A synthetic scenario generator and a
metrics harness reproduce the evaluation protocol at desk scale.
"""

__version__ = "0.1.0"

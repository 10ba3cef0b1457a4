"""Run configuration: defaults, JSON config files, env overrides, validation.

Config files are UTF-8 JSON with one top-level object per section; any key
left out falls back to the default below. SENTINEL_SEED overrides the seed
regardless of source.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import Duration, SentinelError


class ConfigError(SentinelError):
    """Config file or config value failed validation."""


@dataclass
class FusionConfig:
    d_k: int = 4
    attention_gain: float = 3.0
    recency_tau_s: float = 10.0
    belief_lambda: float = 0.3
    history_len: int = 16
    strategy: str = "attention"  # attention | mean | max

    def validate(self) -> None:
        if self.d_k < 1:
            raise ConfigError(f"fusion.d_k must be >= 1, got {self.d_k}")
        if self.strategy not in ("attention", "mean", "max"):
            raise ConfigError(f"unknown fusion.strategy {self.strategy!r}")
        if not 0.0 < self.belief_lambda <= 1.0:
            raise ConfigError("fusion.belief_lambda must be in (0,1]")
        if self.history_len < 1:
            raise ConfigError("fusion.history_len must be >= 1")


@dataclass
class PolicyConfig:
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon: float = 0.1
    latency_penalty: float = 0.01
    train_sweeps: int = 25

    def validate(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("policy.learning_rate must be in (0,1]")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("policy.discount must be in [0,1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("policy.epsilon must be in [0,1]")


@dataclass
class ReasonerConfig:
    backend: str = "deterministic"  # deterministic | remote
    remote_url: str | None = None
    timeout_s: float = 10.0
    backoff_base_s: float = 0.5
    backoff_multiplier: float = 2.0
    backoff_max_retries: int = 4
    backoff_jitter: float = 0.1
    n_shot: int = 4

    def validate(self) -> None:
        if self.backend not in ("deterministic", "remote"):
            raise ConfigError(f"unknown reasoner.backend {self.backend!r}")
        if self.backend == "remote" and not self.remote_url:
            raise ConfigError("reasoner.remote_url required for the remote backend")
        if self.n_shot < 0:
            raise ConfigError("reasoner.n_shot must be >= 0")


@dataclass
class GeneratorConfig:
    d_log: int = 5
    d_vid: int = 32
    d_aud: int = 16
    delta: float = 4.0
    jitter_s: float = 0.5
    mix_benign: float = 0.7
    mix_log_attack: float = 0.1
    mix_physical: float = 0.1
    mix_coordinated: float = 0.1
    logs_per_window: int = 2
    raw_frames_per_window: int = 4
    clips_per_window: int = 1
    train_windows: int = 1500
    ramp_stages: int = 1  # >1 spreads each incident over escalating windows

    def validate(self) -> None:
        if self.delta < 0:
            raise ConfigError("generator.delta must be >= 0")
        mix = (
            self.mix_benign
            + self.mix_log_attack
            + self.mix_physical
            + self.mix_coordinated
        )
        if abs(mix - 1.0) > 1e-9:
            raise ConfigError(f"generator mix fractions must sum to 1, got {mix}")
        if self.ramp_stages < 1:
            raise ConfigError("generator.ramp_stages must be >= 1")


@dataclass
class RunConfig:
    theta: float = 0.7
    window_len: Duration = field(default_factory=lambda: Duration.from_seconds(5.0))
    watermark_lag: Duration = field(default_factory=lambda: Duration.from_seconds(1.0))
    frame_sample_stride: int = 10
    blur_min_variance: float = 100.0
    seed: int = 42
    fusion: FusionConfig = field(default_factory=FusionConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def validate(self) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must be in (0,1), got {self.theta}")
        if self.frame_sample_stride < 1:
            raise ConfigError(f"frame_sample_stride must be >= 1, got {self.frame_sample_stride}")
        if self.window_len.micros <= 0:
            raise ConfigError("window_len must be positive")
        if self.blur_min_variance < 0:
            raise ConfigError("blur_min_variance must be >= 0")
        self.fusion.validate()
        self.policy.validate()
        self.reasoner.validate()
        self.generator.validate()


_SECTIONS = {
    "fusion": FusionConfig,
    "policy": PolicyConfig,
    "reasoner": ReasonerConfig,
    "generator": GeneratorConfig,
}

# Top-level scalar keys land on RunConfig itself; durations are given in seconds.
_DURATION_KEYS = {"window_len_s": "window_len", "watermark_lag_s": "watermark_lag"}


def _apply_section(obj, values: dict, section: str) -> None:
    known = {f.name for f in fields(obj)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {section}.{key}")
        setattr(obj, key, value)


def load_config(path: str | Path | None = None, seed_override: int | None = None) -> RunConfig:
    """Build a validated RunConfig from defaults, an optional JSON file, and env.

    Precedence, lowest to highest: defaults, config file, SENTINEL_SEED,
    explicit seed_override.
    """
    cfg = RunConfig()
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        for key, value in raw.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"config section {key} must be an object")
                _apply_section(getattr(cfg, key), value, key)
            elif key in _DURATION_KEYS:
                setattr(cfg, _DURATION_KEYS[key], Duration.from_seconds(float(value)))
            elif key in ("theta", "frame_sample_stride", "blur_min_variance", "seed"):
                setattr(cfg, key, value)
            else:
                raise ConfigError(f"unknown config key {key}")

    env_seed = os.environ.get("SENTINEL_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"SENTINEL_SEED must be an integer, got {env_seed!r}") from None
    if seed_override is not None:
        cfg.seed = seed_override

    env_url = os.environ.get("SENTINEL_BACKEND_URL")
    if env_url:
        cfg.reasoner.remote_url = env_url

    cfg.validate()
    return cfg

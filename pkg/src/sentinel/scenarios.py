"""Synthetic multimodal scenario generation with planted, labeled incidents.

One instance occupies ramp_stages consecutive tumbling windows. Benign
background events draw from a fixed world: a benign log vocabulary and ip
pool, a low-rank frame-embedding subspace plus noise, and per-class audio
clusters. Attack instances plant extra events whose features sit at least
delta benign-sigma from the benign distribution, measured per modality:

  logs   - max per-dimension z of the derived feature vector (sigma floored)
  frames - excess distance from the generating subspace, in units of the
           benign residual spread
  audio  - excess distance from the nearest benign class mean, in units of
           the benign distance spread

The generator runs the same feature extractor the parser uses, so asserted
log separations hold for the records the pipeline will actually see. Planted
log event ids are the burst records that individually clear the separation
bound; burst lead-ins stay unlabeled background noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .config import GeneratorConfig, RunConfig
from .core import Duration, SentinelError, Timestamp, rng_for
from .ingestion import LogFeatureExtractor
from .reasoner import ThreatClass

EPOCH_BASE_S = 1_709_251_200  # 2024-03-01T00:00:00Z
SIGMA_FLOOR = 0.02
PLANT_SAFETY = 1.3  # margin above the exact delta-sigma bound

BENIGN_EVENT_NAMES = [
    "DescribeInstances", "ListBuckets", "GetObject", "PutObject", "AssumeRole",
    "ConsoleLogin", "CreateTags", "HeadObject", "GetCallerIdentity", "DescribeAlarms",
]
BENIGN_NAME_WEIGHTS = np.array([0.18, 0.16, 0.15, 0.12, 0.10, 0.09, 0.07, 0.06, 0.04, 0.03])
ATTACK_EVENT_NAMES = [
    "GetSecretValue", "CreateAccessKey", "PutUserPolicy", "ModifyInstanceAttribute",
    "DeleteTrail",
]
BENIGN_USERS = ["alice", "bob", "carol", "dave", "erin", "frank"]
BENIGN_REGIONS = ["us-east-1", "us-west-2", "eu-west-1"]
BENIGN_AUDIO_LABELS = ["engine_idling", "street_music", "children_playing", "dog_bark"]
ATTACK_AUDIO_LABELS = ["gunshot", "siren"]
ZONES = ["zone-a", "zone-b", "zone-c", "zone-d"]


class GenerationError(SentinelError):
    """A planted event failed its separation bound; generator bug."""


class ScenarioKind(Enum):
    BENIGN = "Benign"
    LOG_ATTACK = "LogOnlyAttack"
    PHYSICAL = "PhysicalOnly"
    COORDINATED = "Coordinated"


KIND_TO_CLASS = {
    ScenarioKind.BENIGN: ThreatClass.BENIGN_ANOMALY,
    ScenarioKind.LOG_ATTACK: ThreatClass.INTRUSION,
    ScenarioKind.PHYSICAL: ThreatClass.PHYSICAL_BREACH,
    ScenarioKind.COORDINATED: ThreatClass.COORDINATED_ATTACK,
}

KIND_TO_TACTIC = {
    ScenarioKind.BENIGN: "none",
    ScenarioKind.LOG_ATTACK: "TA0043",
    ScenarioKind.PHYSICAL: "TA0008",
    ScenarioKind.COORDINATED: "TA0008",
}

# coordinated combos cycle deterministically: log+video, log+audio,
# video+audio, all three
COORDINATED_COMBOS = (
    ("log", "video"),
    ("log", "audio"),
    ("video", "audio"),
    ("log", "video", "audio"),
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Plan for one instance: what gets planted, how far out, how aligned."""

    kind: ScenarioKind
    delta: float
    jitter_s: float
    planted_modalities: tuple[str, ...]
    log_burst: int
    video_plants: int
    audio_plants: int

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise SentinelError("delta must be >= 0")
        if self.kind is ScenarioKind.COORDINATED and len(self.planted_modalities) < 2:
            raise SentinelError("coordinated scenarios plant at least two modalities")


class ScenarioWorld:
    """Distribution parameters shared by every split drawn from one seed."""

    def __init__(self, cfg: GeneratorConfig, seed: int):
        self.cfg = cfg
        rng = rng_for(seed, "world")
        self.office_ips = [f"198.51.100.{10 + i}" for i in range(12)]

        raw = rng.normal(size=(cfg.d_vid, 3))
        q, _ = np.linalg.qr(raw)
        self.video_basis = q.T  # (3, d_vid), orthonormal rows
        self.video_mean = rng.normal(0.0, 0.5, size=cfg.d_vid)
        self.video_sigma_z = 2.0
        self.video_sigma_n = 0.25

        self.audio_means = rng.normal(0.0, 2.5, size=(len(BENIGN_AUDIO_LABELS), cfg.d_aud))
        self.audio_sigma = 0.6

        est = rng_for(seed, "world-stats")
        self.video_resid_stats = self._estimate_video_resid(est)
        self.audio_dist_stats = self._estimate_audio_dist(est)
        self.log_feature_stats = self._estimate_log_features(est)

    # -- benign draws --------------------------------------------------------

    def benign_video_embedding(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.normal(0.0, self.video_sigma_z, size=3)
        noise = rng.normal(0.0, self.video_sigma_n, size=self.cfg.d_vid)
        return self.video_mean + z @ self.video_basis + noise

    def benign_audio_embedding(self, rng: np.random.Generator) -> tuple[str, np.ndarray]:
        idx = int(rng.integers(len(BENIGN_AUDIO_LABELS)))
        emb = self.audio_means[idx] + rng.normal(0.0, self.audio_sigma, size=self.cfg.d_aud)
        return BENIGN_AUDIO_LABELS[idx], emb

    # -- separation machinery -----------------------------------------------

    def video_residual(self, x: np.ndarray) -> float:
        centered = x - self.video_mean
        coeffs = self.video_basis @ centered
        return float(np.linalg.norm(centered - coeffs @ self.video_basis))

    def audio_distance(self, x: np.ndarray) -> float:
        return float(np.min(np.linalg.norm(self.audio_means - x, axis=1)))

    def _estimate_video_resid(self, rng: np.random.Generator) -> tuple[float, float]:
        sample = np.array([self.video_residual(self.benign_video_embedding(rng))
                           for _ in range(1500)])
        return float(sample.mean()), max(float(sample.std()), SIGMA_FLOOR)

    def _estimate_audio_dist(self, rng: np.random.Generator) -> tuple[float, float]:
        sample = np.array([self.audio_distance(self.benign_audio_embedding(rng)[1])
                           for _ in range(1500)])
        return float(sample.mean()), max(float(sample.std()), SIGMA_FLOOR)

    def _estimate_log_features(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        extractor = LogFeatureExtractor()
        feats = []
        ts = EPOCH_BASE_S * 1.0
        for _ in range(2000):
            ts += float(rng.uniform(1.0, 4.0))
            name = BENIGN_EVENT_NAMES[int(rng.choice(len(BENIGN_EVENT_NAMES), p=BENIGN_NAME_WEIGHTS))]
            ip = self._benign_ip(rng)
            error = "AccessDenied" if rng.uniform() < 0.04 else None
            feats.append(extractor.features(Timestamp.from_seconds(ts), name, ip, error))
        arr = np.array(feats)
        return arr.mean(axis=0), np.maximum(arr.std(axis=0), SIGMA_FLOOR)

    def _benign_ip(self, rng: np.random.Generator) -> str:
        if rng.uniform() < 0.03:
            return f"192.0.2.{int(rng.integers(1, 255))}"
        return self.office_ips[int(rng.integers(len(self.office_ips)))]

    def planted_video_embedding(self, rng: np.random.Generator, delta: float) -> np.ndarray:
        """In-subspace structure like a benign frame, but with the off-subspace
        component set to exactly the target residual."""
        mu_r, sigma_r = self.video_resid_stats
        target = mu_r + max(delta, 0.1) * sigma_r * PLANT_SAFETY
        z = rng.normal(0.0, self.video_sigma_z, size=3)
        direction = rng.normal(size=self.cfg.d_vid)
        direction -= (self.video_basis @ direction) @ self.video_basis
        direction /= np.linalg.norm(direction)
        return self.video_mean + z @ self.video_basis + target * direction

    def planted_audio_embedding(self, rng: np.random.Generator, delta: float) -> np.ndarray:
        mu_d, sigma_d = self.audio_dist_stats
        target = mu_d + max(delta, 0.1) * sigma_d * PLANT_SAFETY
        center = self.audio_means[int(rng.integers(len(self.audio_means)))]
        direction = rng.normal(size=self.cfg.d_aud)
        direction /= np.linalg.norm(direction)
        return center + target * direction

    def log_z_max(self, features) -> float:
        mu, sigma = self.log_feature_stats
        return float(np.max(np.abs(np.asarray(features) - mu) / sigma))


def build_specs(cfg: GeneratorConfig, n: int, rng: np.random.Generator) -> list[ScenarioSpec]:
    """Assign instance kinds by the configured mix, deterministically."""
    kinds = [ScenarioKind.BENIGN, ScenarioKind.LOG_ATTACK, ScenarioKind.PHYSICAL,
             ScenarioKind.COORDINATED]
    probs = [cfg.mix_benign, cfg.mix_log_attack, cfg.mix_physical, cfg.mix_coordinated]
    draws = rng.choice(len(kinds), size=n, p=probs)
    specs = []
    physical_flip = 0
    coordinated_idx = 0
    burst = max(3, int(round(1.5 * cfg.delta)) + 1)
    for i in range(n):
        kind = kinds[int(draws[i])]
        if kind is ScenarioKind.BENIGN:
            planted: tuple[str, ...] = ()
        elif kind is ScenarioKind.LOG_ATTACK:
            planted = ("log",)
        elif kind is ScenarioKind.PHYSICAL:
            planted = ("video",) if physical_flip % 2 == 0 else ("audio",)
            physical_flip += 1
        else:
            planted = COORDINATED_COMBOS[coordinated_idx % len(COORDINATED_COMBOS)]
            coordinated_idx += 1
        specs.append(
            ScenarioSpec(
                kind=kind,
                delta=cfg.delta,
                jitter_s=cfg.jitter_s,
                planted_modalities=planted,
                log_burst=burst,
                video_plants=2,
                audio_plants=1,
            )
        )
    return specs


@dataclass
class SplitData:
    log_lines: list[str]
    frame_lines: list[str]
    audio_lines: list[str]
    truth_rows: list[dict]


def _iso(ts_s: float) -> str:
    micros = round(ts_s * 1_000_000)
    from datetime import datetime, timezone

    dt = datetime.fromtimestamp(micros / 1_000_000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def _stage_delta(delta: float, stage: int, n_stages: int) -> float:
    """Ramped incidents escalate: early stages are fainter."""
    if n_stages == 1:
        return delta
    frac = 0.45 + 0.55 * (stage / (n_stages - 1))
    return delta * frac


def generate_split(
    world: ScenarioWorld,
    cfg: GeneratorConfig,
    window_len: Duration,
    specs: list[ScenarioSpec],
    rng: np.random.Generator,
    id_prefix: str,
    start_window: int = 0,
) -> SplitData:
    win_s = window_len.seconds
    stages = cfg.ramp_stages
    # truth rows use the synchronizer's absolute epoch-aligned window index
    abs_base = (EPOCH_BASE_S * 1_000_000) // window_len.micros

    log_records: list[dict] = []   # staging: {"ts_s", "name", "ip", "user", "region",
                                   #           "error", "planted_for", "min_z"}
    frame_lines: list[str] = []
    audio_lines: list[str] = []
    truth_rows: list[dict] = []
    planted_frames: dict[str, float] = {}
    planted_audio: dict[str, float] = {}

    for i, spec in enumerate(specs):
        incident_id = f"{id_prefix}-{i:05d}"
        base_window = start_window + i * stages
        windows = range(base_window, base_window + stages)
        event_ids: list[str] = []
        first_plant_ts: float | None = None
        attack_ip = f"203.0.113.{(i % 200) + 1}"

        for stage, w in enumerate(windows):
            w_start = EPOCH_BASE_S + w * win_s
            plant_here = spec.kind is not ScenarioKind.BENIGN
            delta_here = _stage_delta(spec.delta, stage, stages)

            # benign background logs
            for _ in range(cfg.logs_per_window):
                log_records.append({
                    "ts_s": w_start + float(rng.uniform(0.05, win_s - 0.05)),
                    "name": BENIGN_EVENT_NAMES[int(rng.choice(len(BENIGN_EVENT_NAMES),
                                                              p=BENIGN_NAME_WEIGHTS))],
                    "ip": world._benign_ip(rng),
                    "user": BENIGN_USERS[int(rng.integers(len(BENIGN_USERS)))],
                    "region": BENIGN_REGIONS[int(rng.integers(len(BENIGN_REGIONS)))],
                    "error": "AccessDenied" if rng.uniform() < 0.04 else None,
                    "planted_for": None,
                })

            # benign background frames: survivors at stride indices, one decimated
            clip_id = f"cam-{ZONES[w % len(ZONES)]}-w{w}"
            zone = ZONES[w % len(ZONES)]
            for j in range(cfg.raw_frames_per_window):
                survives_stride = j < 2
                index = j * 10 if survives_stride else 10 * j + 5
                blurry = survives_stride and rng.uniform() < 0.05
                emb = world.benign_video_embedding(rng)
                frame_lines.append(json.dumps({
                    "clip_id": clip_id,
                    "frame_index": index,
                    "ts": round((w_start + 0.4 + 0.9 * j) * 1_000_000),
                    "blur_variance": float(rng.uniform(10.0, 80.0)) if blurry
                    else float(rng.uniform(150.0, 400.0)),
                    "zone_id": zone,
                    "embedding": [round(float(v), 5) for v in emb],
                }, sort_keys=True))

            # benign background audio
            for j in range(cfg.clips_per_window):
                label, emb = world.benign_audio_embedding(rng)
                audio_lines.append(json.dumps({
                    "clip_id": f"aud-w{w}-{j}",
                    "ts": round((w_start + float(rng.uniform(0.1, win_s - 0.1))) * 1_000_000),
                    "label": label,
                    "label_confidence": round(float(rng.uniform(0.55, 0.95)), 4),
                    "embedding": [round(float(v), 5) for v in emb],
                }, sort_keys=True))

            if not plant_here:
                continue

            center = w_start + win_s / 2.0

            def jitter() -> float:
                return float(np.clip(
                    center + rng.uniform(-spec.jitter_s, spec.jitter_s) - w_start,
                    0.2, win_s - 0.2))

            if "log" in spec.planted_modalities:
                strong = delta_here >= 3.0
                burst_start = jitter()
                for k in range(spec.log_burst):
                    ts_s = w_start + min(burst_start + k * 0.25, win_s - 0.1)
                    log_records.append({
                        "ts_s": ts_s,
                        "name": ATTACK_EVENT_NAMES[int(rng.integers(len(ATTACK_EVENT_NAMES)))],
                        "ip": attack_ip,
                        "user": "mallory",
                        "region": BENIGN_REGIONS[0],
                        "error": "AccessDenied" if strong else None,
                        "planted_for": incident_id,
                        "delta": delta_here,
                    })
                    if first_plant_ts is None or ts_s < first_plant_ts:
                        first_plant_ts = ts_s

            if "video" in spec.planted_modalities:
                offset = jitter()
                for k in range(spec.video_plants):
                    frame_id_index = (k + 2) * 10  # stride survivors, sharp
                    emb = world.planted_video_embedding(rng, delta_here)
                    event_id = f"{clip_id}:{frame_id_index}"
                    ts_s = w_start + min(offset + 0.4 * k, win_s - 0.1)
                    frame_lines.append(json.dumps({
                        "clip_id": clip_id,
                        "frame_index": frame_id_index,
                        "ts": round(ts_s * 1_000_000),
                        "blur_variance": float(rng.uniform(200.0, 400.0)),
                        "zone_id": zone,
                        "embedding": [round(float(v), 5) for v in emb],
                    }, sort_keys=True))
                    event_ids.append(event_id)
                    planted_frames[event_id] = delta_here
                    if first_plant_ts is None or ts_s < first_plant_ts:
                        first_plant_ts = ts_s

            if "audio" in spec.planted_modalities:
                for k in range(spec.audio_plants):
                    clip = f"aud-w{w}-plant{k}"
                    emb = world.planted_audio_embedding(rng, delta_here)
                    label = ATTACK_AUDIO_LABELS[int(rng.integers(len(ATTACK_AUDIO_LABELS)))]
                    confidence = (rng.uniform(0.9, 0.99) if delta_here >= 3.0
                                  else rng.uniform(0.6, 0.8))
                    ts_s = w_start + jitter()
                    audio_lines.append(json.dumps({
                        "clip_id": clip,
                        "ts": round(ts_s * 1_000_000),
                        "label": label,
                        "label_confidence": round(float(confidence), 4),
                        "embedding": [round(float(v), 5) for v in emb],
                    }, sort_keys=True))
                    event_ids.append(clip)
                    planted_audio[clip] = delta_here
                    if first_plant_ts is None or ts_s < first_plant_ts:
                        first_plant_ts = ts_s

        truth_rows.append({
            "incident_id": incident_id,
            "kind": spec.kind.value,
            "threat_class": KIND_TO_CLASS[spec.kind].value,
            "tactic": KIND_TO_TACTIC[spec.kind],
            "window_index": abs_base + base_window,
            "n_windows": stages,
            "modalities": sorted(spec.planted_modalities),
            "event_ids": event_ids,  # log ids appended after positional assignment
            "first_event_ts_micros": (
                round(first_plant_ts * 1_000_000) if first_plant_ts is not None else None
            ),
        })

    log_lines = _finalize_logs(world, log_records, truth_rows)
    _assert_embedding_separation(world, frame_lines, audio_lines, planted_frames, planted_audio)
    return SplitData(log_lines, frame_lines, audio_lines, truth_rows)


def _finalize_logs(world: ScenarioWorld, records: list[dict], truth_rows: list[dict]) -> list[str]:
    """Sort, assign positional ids, derive features exactly as the parser
    will, and label the planted records that clear the separation bound."""
    records.sort(key=lambda r: r["ts_s"])
    extractor = LogFeatureExtractor()
    by_incident: dict[str, list[str]] = {}
    lines = []
    for pos, rec in enumerate(records):
        features = extractor.features(
            Timestamp.from_seconds(rec["ts_s"]), rec["name"], rec["ip"], rec["error"]
        )
        incident = rec["planted_for"]
        if incident is not None and world.log_z_max(features) >= rec["delta"]:
            by_incident.setdefault(incident, []).append(f"log-{pos:06d}")
        obj = {
            "eventTime": _iso(rec["ts_s"]),
            "eventName": rec["name"],
            "sourceIPAddress": rec["ip"],
            "userIdentity": rec["user"],
            "awsRegion": rec["region"],
        }
        if rec["error"]:
            obj["errorCode"] = rec["error"]
        lines.append(json.dumps(obj, sort_keys=True))

    for row in truth_rows:
        if "log" in row["modalities"]:
            labeled = by_incident.get(row["incident_id"], [])
            if len(labeled) < 2:
                raise GenerationError(
                    f"incident {row['incident_id']} produced {len(labeled)} separated "
                    "log events; generator parameters too weak"
                )
            row["event_ids"] = labeled + row["event_ids"]
    return lines


def _assert_embedding_separation(world, frame_lines, audio_lines, planted_frames, planted_audio):
    for line in frame_lines:
        obj = json.loads(line)
        event_id = f"{obj['clip_id']}:{obj['frame_index']}"
        if event_id in planted_frames:
            delta = planted_frames[event_id]
            mu_r, sigma_r = world.video_resid_stats
            resid = world.video_residual(np.array(obj["embedding"]))
            if (resid - mu_r) / sigma_r < delta - 1e-6:
                raise GenerationError(f"frame {event_id} under-separated")
    for line in audio_lines:
        obj = json.loads(line)
        if obj["clip_id"] in planted_audio:
            delta = planted_audio[obj["clip_id"]]
            mu_d, sigma_d = world.audio_dist_stats
            dist = world.audio_distance(np.array(obj["embedding"]))
            if (dist - mu_d) / sigma_d < delta - 1e-6:
                raise GenerationError(f"clip {obj['clip_id']} under-separated")


def generate_dataset(config: RunConfig, n: int, out_dir: str | Path) -> dict:
    """Write eval and train splits plus manifest; returns the manifest."""
    if n < 1:
        raise SentinelError("n must be >= 1")
    cfg = config.generator
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = ScenarioWorld(cfg, config.seed)

    eval_specs = build_specs(cfg, n, rng_for(config.seed, "eval-specs"))
    eval_split = generate_split(
        world, cfg, config.window_len, eval_specs, rng_for(config.seed, "eval-events"),
        id_prefix="inc",
    )

    train_specs = build_specs(cfg, cfg.train_windows, rng_for(config.seed, "train-specs"))
    train_split = generate_split(
        world, cfg, config.window_len, train_specs, rng_for(config.seed, "train-events"),
        id_prefix="trn",
    )

    _write_lines(out / "logs.jsonl", eval_split.log_lines)
    _write_lines(out / "frames.jsonl", eval_split.frame_lines)
    _write_lines(out / "audio.jsonl", eval_split.audio_lines)
    _write_lines(out / "truth.jsonl", [json.dumps(r, sort_keys=True) for r in eval_split.truth_rows])
    _write_lines(out / "train_logs.jsonl", train_split.log_lines)
    _write_lines(out / "train_frames.jsonl", train_split.frame_lines)
    _write_lines(out / "train_audio.jsonl", train_split.audio_lines)
    _write_lines(out / "train_truth.jsonl",
                 [json.dumps(r, sort_keys=True) for r in train_split.truth_rows])

    manifest = {
        "format": "sentinel-dataset",
        "version": 1,
        "n_instances": n,
        "train_instances": cfg.train_windows,
        "seed": config.seed,
        "window_len_s": config.window_len.seconds,
        "ramp_stages": cfg.ramp_stages,
        "delta": cfg.delta,
        "mix": {
            "benign": cfg.mix_benign,
            "log_attack": cfg.mix_log_attack,
            "physical": cfg.mix_physical,
            "coordinated": cfg.mix_coordinated,
        },
        "counts": {
            "eval_logs": len(eval_split.log_lines),
            "eval_frames": len(eval_split.frame_lines),
            "eval_audio": len(eval_split.audio_lines),
            "eval_truth": len(eval_split.truth_rows),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True),
                                       encoding="utf-8")
    return manifest


def _write_lines(path: Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")

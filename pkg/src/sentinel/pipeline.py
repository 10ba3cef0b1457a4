"""End-to-end orchestration: dataset loading, training, windowed replay,
baselines, and report assembly.

The replay loop is the production path: perception agents score each window,
attention fusion gates it, gated windows flow through the reasoner and the
frozen Q-policy, actions execute against simulation adapters and land in the
journal, and contributing signals anchor an incident node in the correlation
graph. Everything written to the canonical artifacts (trace, journal, graph,
report) is derived from event time and seeded state, so identical config and
seed reproduce identical bytes; wall-clock latency lives in a separate
timings sidecar.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .config import RunConfig
from .core import (
    Duration,
    HIGH_BAND,
    MODALITY_ORDER,
    ModalEvent,
    Modality,
    SentinelError,
    Timestamp,
    rng_for,
)
from .fusion import BeliefState, FusionParams, fuse
from .graph import CorrelationGraph
from .ingestion import (
    LogFeatureExtractor,
    WindowBatch,
    parse_audio_line,
    parse_frame_line,
    parse_log_line,
    read_jsonl,
    sample_frames,
    synchronize,
)
from .metrics import MetricsReport, build_report, measure_latency
from .perception import ModelBundle, WindowScore
from .detectors import ae_fit, gmm_fit_em, iforest_fit
from .reasoner import (
    BackoffPolicy,
    DeterministicBackend,
    Hypothesis,
    HypothesisSource,
    ReasoningContext,
    RemoteBackend,
    ThreatClass,
    construct_prompt,
    default_template,
    escalation_summary,
    reason,
)
from .responder import (
    Action,
    ActionKind,
    Journal,
    PolicyState,
    QTable,
    SimulationAdapters,
    compute_reward,
    execute_action,
    q_update,
    select_action,
)


class DataError(SentinelError):
    """Dataset directory or file missing / malformed."""


class BaselineKind(Enum):
    RULE_ONLY = "RuleOnly"
    UNIMODAL_MAX = "UniModalMax"
    STATIC_MEAN_FUSION = "StaticMeanFusion"


@dataclass
class Dataset:
    events: dict[Modality, list[ModalEvent]]
    truth: list[dict]
    train_events: dict[Modality, list[ModalEvent]]
    train_truth: list[dict]
    manifest: dict
    path: Path


def _load_events(
    data_dir: Path, config: RunConfig, prefix: str
) -> dict[Modality, list[ModalEvent]]:
    logs_path = data_dir / f"{prefix}logs.jsonl"
    frames_path = data_dir / f"{prefix}frames.jsonl"
    audio_path = data_dir / f"{prefix}audio.jsonl"
    for p in (logs_path, frames_path, audio_path):
        if not p.exists():
            raise DataError(f"missing dataset file: {p}")

    extractor = LogFeatureExtractor()
    log_events = []
    for i, line in enumerate(read_jsonl(logs_path)):
        record = parse_log_line(line, extractor)
        log_events.append(
            ModalEvent(f"log-{i:06d}", Modality.LOG, record.event_time, record)
        )

    by_clip: dict[str, list] = {}
    for line in read_jsonl(frames_path):
        frame = parse_frame_line(line)
        by_clip.setdefault(frame.clip_id, []).append(frame)
    frame_events = []
    for clip_id, frames in by_clip.items():
        frames.sort(key=lambda f: f.frame_index)
        kept = sample_frames(frames, config.frame_sample_stride, config.blur_min_variance)
        for frame in kept:
            frame_events.append(
                ModalEvent(f"{clip_id}:{frame.frame_index}", Modality.VIDEO, frame.ts, frame)
            )
    frame_events.sort(key=lambda e: (e.ts.micros, e.id))

    audio_events = []
    for line in read_jsonl(audio_path):
        clip = parse_audio_line(line)
        audio_events.append(ModalEvent(clip.clip_id, Modality.AUDIO, clip.ts, clip))

    return {
        Modality.LOG: log_events,
        Modality.VIDEO: frame_events,
        Modality.AUDIO: audio_events,
    }


def load_dataset(data_dir: str | Path, config: RunConfig) -> Dataset:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"dataset directory not found: {data_dir}")
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"missing dataset file: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    truth = [json.loads(line) for line in read_jsonl(data_dir / "truth.jsonl")]
    train_truth = [json.loads(line) for line in read_jsonl(data_dir / "train_truth.jsonl")]
    return Dataset(
        events=_load_events(data_dir, config, ""),
        truth=truth,
        train_events=_load_events(data_dir, config, "train_"),
        train_truth=train_truth,
        manifest=manifest,
        path=data_dir,
    )


def _window_label_map(truth_rows: list[dict]) -> dict[int, tuple[ThreatClass, dict]]:
    classes = {c.value: c for c in ThreatClass}
    labels: dict[int, tuple[ThreatClass, dict]] = {}
    for row in truth_rows:
        klass = classes[row["threat_class"]]
        for w in range(row["window_index"], row["window_index"] + row["n_windows"]):
            labels[w] = (klass, row)
    return labels


def _benign_training_events(
    events: dict[Modality, list[ModalEvent]], truth_rows: list[dict], window_len: Duration
) -> dict[Modality, list[ModalEvent]]:
    labels = _window_label_map(truth_rows)
    out: dict[Modality, list[ModalEvent]] = {m: [] for m in MODALITY_ORDER}
    for modality, evs in events.items():
        for e in evs:
            w = e.ts.micros // window_len.micros
            label = labels.get(w)
            if label is None or label[0] is ThreatClass.BENIGN_ANOMALY:
                out[modality].append(e)
    return out


def fit_detectors(dataset: Dataset, config: RunConfig) -> ModelBundle:
    """Fit the three detectors on the training split's benign windows."""
    benign = _benign_training_events(dataset.train_events, dataset.train_truth,
                                     config.window_len)
    log_features = [e.payload.numeric_features for e in benign[Modality.LOG]]
    frame_embeddings = [e.payload.embedding for e in benign[Modality.VIDEO]]
    clip_embeddings = [e.payload.embedding for e in benign[Modality.AUDIO]]
    if not log_features or not frame_embeddings or not clip_embeddings:
        raise DataError("training split has no benign events for some modality")
    seed = config.seed
    return ModelBundle(
        iforest=iforest_fit(log_features, psi=min(256, len(log_features)), t=100,
                            rng=rng_for(seed, "fit-iforest")),
        autoencoder=ae_fit(frame_embeddings, k=4, epochs=600, lr=0.1,
                           rng=rng_for(seed, "fit-autoencoder")),
        gmm=gmm_fit_em(clip_embeddings, k=4, rng=rng_for(seed, "fit-gmm")),
    )


@dataclass
class ReplayOptions:
    bypass_reasoner: bool = False
    fixed_action: ActionKind | None = None
    gate_modality: Modality | None = None  # unimodal baseline: gate one score
    collect_graph: bool = True


@dataclass
class RunArtifacts:
    trace_rows: list[dict]
    journal: Journal
    graph: CorrelationGraph
    timings_s: list[float]
    events_processed: int
    wall_s: float

    @property
    def gate_count(self) -> int:
        return sum(1 for row in self.trace_rows if row["gate_fired"])


def _entities_from_scores(
    window_scores: dict[Modality, WindowScore], alpha: tuple[float, ...]
) -> dict[str, str]:
    """Merge per-modality entities, highest attention weight first."""
    order = sorted(range(3), key=lambda i: (-alpha[i], i))
    merged: dict[str, str] = {}
    for i in order:
        for key, value in window_scores[MODALITY_ORDER[i]].entities.items():
            merged.setdefault(key, value)
    return merged


def _action_params(kind: ActionKind, entities: dict[str, str]) -> Action:
    if kind is ActionKind.BLOCK_IP:
        return Action.of(kind, ip=entities.get("source_ip", "0.0.0.0"))
    if kind is ActionKind.SUSPEND_ACCOUNT:
        return Action.of(kind, account=entities.get("account", "unknown"))
    if kind is ActionKind.RECONFIGURE_POLICY:
        return Action.of(kind, policy_id="restricted-v1")
    if kind is ActionKind.LOCKDOWN:
        return Action.of(kind, zone=entities.get("zone", "zone-unknown"))
    return Action(kind)


def _score_payload(ws: WindowScore) -> dict:
    return {
        "score": ws.threat.score,
        "confidence": ws.threat.confidence,
        "event_scores": {k: round(v, 6) for k, v in ws.event_scores.items()},
        "explanation": ws.threat.explanation,
    }


class Orchestrator:
    """Owns the mutable per-run state: belief, policy, journal, graph."""

    def __init__(
        self,
        models: ModelBundle,
        fusion_params: FusionParams,
        qtable: QTable,
        config: RunConfig,
        options: ReplayOptions | None = None,
        backend=None,
    ):
        self.agents = models.agents()
        self.fusion_params = fusion_params
        self.qtable = qtable
        self.config = config
        self.options = options or ReplayOptions()
        self.backend = backend or DeterministicBackend()
        self.backoff = BackoffPolicy(
            base_s=config.reasoner.backoff_base_s,
            multiplier=config.reasoner.backoff_multiplier,
            max_retries=config.reasoner.backoff_max_retries,
            jitter=config.reasoner.backoff_jitter,
        )
        self.template = default_template()
        self.belief = BeliefState(
            smoothing=config.fusion.belief_lambda,
            history_len=config.fusion.history_len,
        )
        self.journal = Journal()
        self.adapters = SimulationAdapters()
        self.graph = CorrelationGraph()
        self.rng = rng_for(config.seed, "replay")
        self.last_action_window: int | None = None
        self.incident_counter = 0

    def score_window(self, window: WindowBatch) -> dict[Modality, WindowScore]:
        produced_at = window.window_end
        return {
            m: self.agents[m].score_window(window.events(m), produced_at)
            for m in MODALITY_ORDER
        }

    def process_window(self, window: WindowBatch) -> tuple[dict, float]:
        """Run one window end to end; returns (trace_row, remote_wait_s)."""
        cfg = self.config
        opts = self.options
        window_scores = self.score_window(window)
        threats = {m: ws.threat for m, ws in window_scores.items()}

        if opts.gate_modality is not None:
            raw = threats[opts.gate_modality].score
            alpha = tuple(1.0 if m is opts.gate_modality else 0.0 for m in MODALITY_ORDER)
            fused_score, gate_fired = raw, raw > cfg.theta
            fa = None
        else:
            fa = fuse(threats, self.fusion_params, cfg.theta,
                      now=window.window_end, window_start=window.window_start)
            alpha, fused_score, gate_fired = fa.alpha, fa.fused_score, fa.gate_fired
            self.belief.update(fa, threats)

        remote_wait = 0.0
        hypothesis = None
        action_entry = None
        summary = None
        if gate_fired:
            hypothesis, remote_wait = self._reason(threats, alpha, window_scores)
            entities = _entities_from_scores(window_scores, alpha)
            if fa is not None:
                summary = escalation_summary(hypothesis, fa, entities)
            recent = (
                self.last_action_window is not None
                and window.index - self.last_action_window <= cfg.fusion.history_len
            )
            state = PolicyState.from_fused(fused_score, hypothesis.threat_class, recent)
            if opts.fixed_action is not None:
                kind = opts.fixed_action
            else:
                kind = select_action(self.qtable, state, self.rng)
            action = _action_params(kind, entities)
            entry = execute_action(
                action, self.adapters, self.journal, window.window_end,
                state_key=state.key(),
            )
            if kind is not ActionKind.NO_ACTION:
                self.last_action_window = window.index
            action_entry = {
                "kind": kind.value,
                "params": action.param_dict,
                "result": entry.result.value,
                "seq": entry.seq,
                "ts_micros": window.window_end.micros,
            }
            if opts.collect_graph:
                self._anchor_incident(window, window_scores, hypothesis)

        row = {
            "window_index": window.index,
            "window_start_micros": window.window_start.micros,
            "modalities": {
                m.value: _score_payload(window_scores[m]) for m in MODALITY_ORDER
            },
            "alpha": [round(a, 9) for a in alpha],
            "fused_score": round(fused_score, 9),
            "gate_fired": gate_fired,
            "belief": {m.value: round(self.belief.beliefs[m], 9) for m in MODALITY_ORDER},
            "hypothesis": (
                None if hypothesis is None
                else {"class": hypothesis.threat_class.value, "source": hypothesis.source.value}
            ),
            "action": action_entry,
            "summary": summary,
        }
        return row, remote_wait

    def _reason(self, threats, alpha, window_scores) -> tuple[Hypothesis, float]:
        if self.options.bypass_reasoner:
            return (
                Hypothesis(ThreatClass.UNKNOWN, "reasoner bypassed", None,
                           HypothesisSource.DETERMINISTIC),
                0.0,
            )
        contexts = {m: threats[m].explanation for m in MODALITY_ORDER}
        prompt = construct_prompt(self.template, contexts, alpha)
        ctx = ReasoningContext(prompt=prompt, scores=threats)
        started = time.perf_counter()
        hypothesis = reason(self.backend, ctx, self.backoff, self.rng)
        waited = time.perf_counter() - started if isinstance(self.backend, RemoteBackend) else 0.0

        # single refinement pass: a remote Unknown with exactly one High
        # modality gets one re-prompt carrying that modality's event detail
        if (
            isinstance(self.backend, RemoteBackend)
            and hypothesis.source is HypothesisSource.REMOTE
            and hypothesis.threat_class is ThreatClass.UNKNOWN
        ):
            highs = [m for m in MODALITY_ORDER if threats[m].score >= HIGH_BAND]
            if len(highs) == 1:
                detail = json.dumps(
                    window_scores[highs[0]].event_scores, sort_keys=True
                )
                refined_ctx = ReasoningContext(
                    prompt=prompt + f"\nDetail ({highs[0].value}): {detail}",
                    scores=threats,
                )
                started = time.perf_counter()
                refined = reason(self.backend, refined_ctx, self.backoff, self.rng)
                waited += time.perf_counter() - started
                if refined.threat_class is not ThreatClass.UNKNOWN:
                    hypothesis = refined
        return hypothesis, waited

    def _anchor_incident(self, window, window_scores, hypothesis) -> None:
        incident_id = f"incident-{self.incident_counter:05d}"
        self.incident_counter += 1
        self.graph.add_incident(
            incident_id, window.window_end,
            {"threat_class": hypothesis.threat_class.value,
             "window_index": str(window.index)},
        )
        for m in MODALITY_ORDER:
            contributing = set(window_scores[m].threat.event_ids)
            for event in window.events(m):
                if event.id in contributing and event.id not in self.graph.nodes:
                    self.graph.add_signal(event)
                    self.graph.link_signals(incident_id, event.id)


def replay(
    events: dict[Modality, list[ModalEvent]],
    models: ModelBundle,
    fusion_params: FusionParams,
    qtable: QTable,
    config: RunConfig,
    options: ReplayOptions | None = None,
    backend=None,
) -> RunArtifacts:
    """Deterministic single-threaded replay over the full event set."""
    qtable.epsilon = 0.0  # frozen policy during replay
    orchestrator = Orchestrator(models, fusion_params, qtable, config, options, backend)
    windows = synchronize(events, config.window_len, config.watermark_lag)
    trace_rows: list[dict] = []
    timings: list[float] = []
    events_processed = 0
    wall_start = time.perf_counter()
    for window in windows:
        started = time.perf_counter()
        row, remote_wait = orchestrator.process_window(window)
        timings.append(time.perf_counter() - started - remote_wait)
        trace_rows.append(row)
        events_processed += sum(len(window.events(m)) for m in MODALITY_ORDER)
    wall = time.perf_counter() - wall_start
    return RunArtifacts(
        trace_rows=trace_rows,
        journal=orchestrator.journal,
        graph=orchestrator.graph,
        timings_s=timings,
        events_processed=events_processed,
        wall_s=wall,
    )


def train_qtable(
    dataset: Dataset,
    models: ModelBundle,
    fusion_params: FusionParams,
    config: RunConfig,
) -> QTable:
    """Train the response policy on the labeled training split.

    Gated training windows become one-step experiences (state, label,
    elapsed); epsilon-greedy sweeps over them converge the table to the
    expected-reward argmax, which the replay then exploits greedily.
    """
    qtable = QTable(
        learning_rate=config.policy.learning_rate,
        discount=config.policy.discount,
        epsilon=config.policy.epsilon,
    )
    agents = models.agents()
    labels = _window_label_map(dataset.train_truth)
    windows = synchronize(dataset.train_events, config.window_len, config.watermark_lag)
    backend = DeterministicBackend()

    experiences = []
    for window in windows:
        scores = {
            m: agents[m].score_window(window.events(m), window.window_end)
            for m in MODALITY_ORDER
        }
        threats = {m: ws.threat for m, ws in scores.items()}
        fa = fuse(threats, fusion_params, config.theta, now=window.window_end,
                  window_start=window.window_start)
        if not fa.gate_fired:
            continue
        hypothesis = backend.reason(ReasoningContext("", threats))
        label_entry = labels.get(window.index)
        outcome = label_entry[0] if label_entry else ThreatClass.BENIGN_ANOMALY
        if label_entry and label_entry[1].get("first_event_ts_micros"):
            elapsed = Duration(
                max(0, window.window_end.micros - label_entry[1]["first_event_ts_micros"])
            )
        else:
            elapsed = Duration(0)
        experiences.append((fa.fused_score, hypothesis.threat_class, outcome, elapsed))

    rng = rng_for(config.seed, "qtrain")
    sweeps = config.policy.train_sweeps
    for sweep in range(sweeps):
        qtable.epsilon = max(0.05, 0.5 * (1.0 - sweep / max(1, sweeps - 1)))
        recent = False
        for fused_score, hyp_class, outcome, elapsed in experiences:
            state = PolicyState.from_fused(fused_score, hyp_class, recent)
            kind = select_action(qtable, state, rng)
            reward = compute_reward(outcome, kind, elapsed, config.policy.latency_penalty)
            q_update(qtable, state, kind, reward, None)
            recent = kind is not ActionKind.NO_ACTION
    qtable.epsilon = config.policy.epsilon
    return qtable


@dataclass
class EvaluationResult:
    report: MetricsReport
    artifacts: RunArtifacts
    models: ModelBundle
    fusion_params: FusionParams
    qtable: QTable


def prepare_models(
    dataset: Dataset, config: RunConfig, models_dir: str | Path | None
) -> tuple[ModelBundle, FusionParams, QTable]:
    """Load a persisted model set, or fit from the training split."""
    if models_dir is not None:
        models_dir = Path(models_dir)
        bundle_file = models_dir / "iforest.json"
        if bundle_file.exists():
            bundle = ModelBundle.load(models_dir)
            fusion_params = FusionParams.from_dict(
                json.loads((models_dir / "fusion.json").read_text(encoding="utf-8"))
            )
            qtable = QTable.from_dict(
                json.loads((models_dir / "qtable.json").read_text(encoding="utf-8"))
            )
            return bundle, fusion_params, qtable

    bundle = fit_detectors(dataset, config)
    fusion_params = FusionParams.default(config.fusion, config.seed)
    qtable = train_qtable(dataset, bundle, fusion_params, config)
    if models_dir is not None:
        save_models(models_dir, bundle, fusion_params, qtable)
    return bundle, fusion_params, qtable


def save_models(models_dir: str | Path, bundle: ModelBundle,
                fusion_params: FusionParams, qtable: QTable) -> None:
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    bundle.save(models_dir)
    (models_dir / "fusion.json").write_text(
        json.dumps(fusion_params.to_dict(), sort_keys=True), encoding="utf-8"
    )
    (models_dir / "qtable.json").write_text(
        json.dumps(qtable.to_dict(), sort_keys=True), encoding="utf-8"
    )


def evaluate(
    dataset: Dataset,
    config: RunConfig,
    models_dir: str | Path | None = None,
    options: ReplayOptions | None = None,
    backend=None,
) -> EvaluationResult:
    bundle, fusion_params, qtable = prepare_models(dataset, config, models_dir)
    if config.fusion.strategy != fusion_params.strategy:
        fusion_params.strategy = config.fusion.strategy
    artifacts = replay(dataset.events, bundle, fusion_params, qtable, config,
                       options, backend)
    report = build_report(artifacts.trace_rows, dataset.truth)
    return EvaluationResult(report, artifacts, bundle, fusion_params, qtable)


# ---------------------------------------------------------------------------
# baselines

RULE_LOG_BURST_MIN = 0.25      # burst feature floor, joint with the error flag
RULE_AUDIO_CONFIDENCE = 0.85   # classifier confidence needed to trust a label
RULE_AUDIO_LABELS = {"gunshot", "siren"}
RULE_VIDEO_PERCENTILE = 99.0   # benign train distance percentile


class RuleOnlyDetector:
    """Fixed-signature stand-in: per-modality thresholds on raw features."""

    def __init__(self, dataset: Dataset, config: RunConfig):
        benign = _benign_training_events(dataset.train_events, dataset.train_truth,
                                         config.window_len)
        frames = np.array([e.payload.embedding for e in benign[Modality.VIDEO]])
        self.video_mean = frames.mean(axis=0)
        distances = np.linalg.norm(frames - self.video_mean, axis=1)
        self.video_threshold = float(np.percentile(distances, RULE_VIDEO_PERCENTILE))

    def tripped(self, window: WindowBatch) -> dict[Modality, ModalEvent | None]:
        hits: dict[Modality, ModalEvent | None] = {m: None for m in MODALITY_ORDER}
        for event in window.events(Modality.LOG):
            f = event.payload.numeric_features
            if f[3] >= 1.0 and f[4] >= RULE_LOG_BURST_MIN:
                hits[Modality.LOG] = event
                break
        for event in window.events(Modality.VIDEO):
            dist = float(np.linalg.norm(np.array(event.payload.embedding) - self.video_mean))
            if dist >= self.video_threshold:
                hits[Modality.VIDEO] = event
                break
        for event in window.events(Modality.AUDIO):
            payload = event.payload
            if payload.label in RULE_AUDIO_LABELS and payload.label_confidence >= RULE_AUDIO_CONFIDENCE:
                hits[Modality.AUDIO] = event
                break
        return hits


_RULE_CLASS = {
    Modality.LOG: ThreatClass.INTRUSION,
    Modality.VIDEO: ThreatClass.PHYSICAL_BREACH,
    Modality.AUDIO: ThreatClass.PHYSICAL_BREACH,
}
_RULE_ACTION = {
    Modality.LOG: ActionKind.BLOCK_IP,
    Modality.VIDEO: ActionKind.LOCKDOWN,
    Modality.AUDIO: ActionKind.ESCALATE,
}


def run_rule_only(dataset: Dataset, config: RunConfig) -> RunArtifacts:
    detector = RuleOnlyDetector(dataset, config)
    windows = synchronize(dataset.events, config.window_len, config.watermark_lag)
    journal = Journal()
    adapters = SimulationAdapters()
    trace_rows = []
    timings = []
    events_processed = 0
    wall_start = time.perf_counter()
    for window in windows:
        started = time.perf_counter()
        hits = detector.tripped(window)
        tripped = [m for m in MODALITY_ORDER if hits[m] is not None]
        gate = bool(tripped)
        action_entry = None
        hypothesis = None
        if gate:
            if len(tripped) >= 2:
                klass = ThreatClass.COORDINATED_ATTACK
            else:
                klass = _RULE_CLASS[tripped[0]]
            hypothesis = {"class": klass.value, "source": "deterministic"}
            lead = tripped[0]
            event = hits[lead]
            kind = _RULE_ACTION[lead]
            if kind is ActionKind.BLOCK_IP:
                action = Action.of(kind, ip=event.payload.source_ip)
            elif kind is ActionKind.LOCKDOWN:
                action = Action.of(kind, zone=event.payload.zone_id)
            else:
                action = Action(kind)
            entry = execute_action(action, adapters, journal, window.window_end)
            action_entry = {
                "kind": kind.value,
                "params": action.param_dict,
                "result": entry.result.value,
                "seq": entry.seq,
                "ts_micros": window.window_end.micros,
            }
        trace_rows.append({
            "window_index": window.index,
            "window_start_micros": window.window_start.micros,
            "modalities": {
                m.value: {
                    "score": 1.0 if hits[m] is not None else 0.0,
                    "confidence": 1.0,
                    "event_scores": (
                        {hits[m].id: 1.0} if hits[m] is not None else {}
                    ),
                    "explanation": "rule",
                }
                for m in MODALITY_ORDER
            },
            "alpha": [1.0 if m in tripped else 0.0 for m in MODALITY_ORDER],
            "fused_score": 1.0 if gate else 0.0,
            "gate_fired": gate,
            "belief": {m.value: 0.0 for m in MODALITY_ORDER},
            "hypothesis": hypothesis,
            "action": action_entry,
            "summary": None,
        })
        timings.append(time.perf_counter() - started)
        events_processed += sum(len(window.events(m)) for m in MODALITY_ORDER)
    wall = time.perf_counter() - wall_start
    return RunArtifacts(trace_rows, journal, CorrelationGraph(), timings,
                        events_processed, wall)


def run_baseline(
    dataset: Dataset,
    config: RunConfig,
    which: BaselineKind,
    models: ModelBundle | None = None,
    fusion_params: FusionParams | None = None,
) -> tuple[MetricsReport, RunArtifacts]:
    """Baseline runs share the pipeline's report shape for comparisons."""
    if which is BaselineKind.RULE_ONLY:
        artifacts = run_rule_only(dataset, config)
        return build_report(artifacts.trace_rows, dataset.truth), artifacts

    if models is None:
        models = fit_detectors(dataset, config)
    empty_policy = QTable()

    if which is BaselineKind.UNIMODAL_MAX:
        best: tuple[MetricsReport, RunArtifacts] | None = None
        for modality in MODALITY_ORDER:
            options = ReplayOptions(
                bypass_reasoner=True,
                fixed_action=_RULE_ACTION[modality],
                gate_modality=modality,
                collect_graph=False,
            )
            params = fusion_params or FusionParams.default(config.fusion, config.seed)
            artifacts = replay(dataset.events, models, params, empty_policy, config, options)
            report = build_report(artifacts.trace_rows, dataset.truth)
            key = -1.0 if report.f1 is None else report.f1
            if best is None or key > (-1.0 if best[0].f1 is None else best[0].f1):
                best = (report, artifacts)
                best[0].comparisons.append({"selected_modality": modality.value})
        return best

    # static mean fusion: uniform weights, no reasoner, fixed escalation
    options = ReplayOptions(
        bypass_reasoner=True, fixed_action=ActionKind.ESCALATE, collect_graph=False
    )
    params = FusionParams.zeros(strategy="mean")
    artifacts = replay(dataset.events, models, params, empty_policy, config, options)
    return build_report(artifacts.trace_rows, dataset.truth), artifacts


# ---------------------------------------------------------------------------
# artifact serialization

def write_artifacts(out_dir: str | Path, result: EvaluationResult,
                    config: RunConfig) -> dict[str, Path]:
    """Write canonical (deterministic) artifacts plus the timing sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / "trace.jsonl",
        "journal": out / "journal.jsonl",
        "graph": out / "graph.jsonl",
        "report": out / "report.json",
        "timings": out / "timings.json",
    }
    with open(paths["trace"], "w", encoding="utf-8") as fh:
        for row in result.artifacts.trace_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    result.artifacts.journal.write_file(paths["journal"])
    result.artifacts.graph.save(paths["graph"])

    report_doc = {
        "seed": config.seed,
        "theta": config.theta,
        "fusion_strategy": config.fusion.strategy,
        "windows": len(result.artifacts.trace_rows),
        "gate_fired": result.artifacts.gate_count,
        "metrics": result.report.to_dict(),
        "note": "wall-clock latency and throughput live in timings.json",
    }
    paths["report"].write_text(json.dumps(report_doc, indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")

    latency = measure_latency(result.artifacts.timings_s)
    timings_doc = {
        "latency": latency,
        "events_processed": result.artifacts.events_processed,
        "wall_s": result.artifacts.wall_s,
        "throughput_events_per_s": (
            result.artifacts.events_processed / result.artifacts.wall_s
            if result.artifacts.wall_s > 0 else None
        ),
    }
    paths["timings"].write_text(json.dumps(timings_doc, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")
    return paths

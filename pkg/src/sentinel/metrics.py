"""Evaluation metrics against planted ground truth.

Detection quality is window-level: a window is positive iff it falls inside
a non-benign incident's span, and the pipeline's verdict is its gate. P and R
are reported as absent (None), never zero, when their denominators vanish.
Situational awareness splits into perception (planted events individually
noticed), comprehension (gate fired with the planted modalities visible), and
projection (correct hypothesis class on fired incidents).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MEDIUM_BAND
from .reasoner import ThreatClass
from .responder import MITIGATIONS, ActionKind


@dataclass
class DetectionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    counts: DetectionCounts
    acc: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    perception: float | None
    comprehension: float | None
    projection: float | None
    sas: float | None
    ae: float | None
    mttr_s: float | None
    total_incidents: int
    fired_incidents: int
    mitigated_incidents: int
    unmitigated_incidents: int
    false_positive_rate: float | None
    comparisons: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "counts": {
                "tp": self.counts.tp, "fp": self.counts.fp,
                "fn": self.counts.fn, "tn": self.counts.tn,
            },
            "acc": self.acc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "false_positive_rate": self.false_positive_rate,
            "sas": {
                "perception": self.perception,
                "comprehension": self.comprehension,
                "projection": self.projection,
                "overall": self.sas,
            },
            "ae": self.ae,
            "mttr_s": self.mttr_s,
            "incidents": {
                "total": self.total_incidents,
                "fired": self.fired_incidents,
                "mitigated": self.mitigated_incidents,
                "unmitigated": self.unmitigated_incidents,
            },
            "comparisons": self.comparisons,
        }

    def render_table(self) -> str:
        def fmt(x, pct=False):
            if x is None:
                return "absent"
            return f"{100 * x:.1f}%" if pct else f"{x:.3f}"

        rows = [
            ("accuracy", fmt(self.acc, pct=True)),
            ("precision", fmt(self.precision, pct=True)),
            ("recall", fmt(self.recall, pct=True)),
            ("f1", fmt(self.f1, pct=True)),
            ("false positive rate", fmt(self.false_positive_rate, pct=True)),
            ("sas", fmt(self.sas)),
            ("adaptive efficacy", fmt(self.ae, pct=True)),
            ("mttr", "absent" if self.mttr_s is None else f"{self.mttr_s:.2f}s"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def incident_windows(row: dict) -> range:
    return range(row["window_index"], row["window_index"] + row["n_windows"])


def attack_window_set(truth_rows: list[dict]) -> set[int]:
    out: set[int] = set()
    for row in truth_rows:
        if row["kind"] != "Benign":
            out.update(incident_windows(row))
    return out


def detection_metrics(trace_rows: list[dict], truth_rows: list[dict]) -> tuple[
    DetectionCounts, float | None, float | None, float | None, float | None
]:
    attacks = attack_window_set(truth_rows)
    counts = DetectionCounts()
    for row in trace_rows:
        fired = row["gate_fired"]
        is_attack = row["window_index"] in attacks
        if fired and is_attack:
            counts.tp += 1
        elif fired:
            counts.fp += 1
        elif is_attack:
            counts.fn += 1
        else:
            counts.tn += 1
    acc = (counts.tp + counts.tn) / counts.total if counts.total else None
    precision = counts.tp / (counts.tp + counts.fp) if (counts.tp + counts.fp) else None
    recall = counts.tp / (counts.tp + counts.fn) if (counts.tp + counts.fn) else None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    elif precision is not None and recall is not None:
        f1 = 0.0
    else:
        f1 = None
    return counts, acc, precision, recall, f1


def _first_fired_window(row: dict, gate_by_window: dict[int, bool]) -> int | None:
    for w in incident_windows(row):
        if gate_by_window.get(w, False):
            return w
    return None


def compute_sas(trace_rows: list[dict], truth_rows: list[dict]) -> dict:
    """Perception, comprehension, projection against planted incidents."""
    planted = [r for r in truth_rows if r["kind"] != "Benign"]
    if not planted:
        return {"perception": None, "comprehension": None, "projection": None, "overall": None}

    by_window = {row["window_index"]: row for row in trace_rows}
    gate_by_window = {row["window_index"]: row["gate_fired"] for row in trace_rows}

    noticed = 0
    total_events = 0
    comprehended = 0
    fired_rows = []
    for incident in planted:
        windows = [by_window[w] for w in incident_windows(incident) if w in by_window]
        scores_by_event: dict[str, float] = {}
        for trace in windows:
            for modality in trace["modalities"].values():
                scores_by_event.update(modality["event_scores"])
        for event_id in incident["event_ids"]:
            total_events += 1
            if scores_by_event.get(event_id, 0.0) >= MEDIUM_BAND:
                noticed += 1

        first_fired = _first_fired_window(incident, gate_by_window)
        if first_fired is not None:
            fired_rows.append((incident, by_window[first_fired]))
            trace = by_window[first_fired]
            if all(
                trace["modalities"][m]["score"] >= MEDIUM_BAND
                for m in incident["modalities"]
            ):
                comprehended += 1

    perception = noticed / total_events if total_events else 0.0
    comprehension = comprehended / len(planted)
    if fired_rows:
        correct = sum(
            1 for incident, trace in fired_rows
            if trace["hypothesis"] is not None
            and trace["hypothesis"]["class"] == incident["threat_class"]
        )
        projection = correct / len(fired_rows)
    else:
        projection = 0.0  # nothing fired, nothing projected
    overall = (perception + comprehension + projection) / 3.0
    return {
        "perception": perception,
        "comprehension": comprehension,
        "projection": projection,
        "overall": overall,
    }


def compute_mttr_ae(trace_rows: list[dict], truth_rows: list[dict]) -> dict:
    """Mean time to respond over mitigated incidents, and adaptive efficacy.

    An incident is mitigated when some window in its span executed an action
    from the fixed correct-mitigation table for its class. Unmitigated
    incidents are excluded from the mean but counted.
    """
    planted = [r for r in truth_rows if r["kind"] != "Benign"]
    by_window = {row["window_index"]: row for row in trace_rows}
    classes = {c.value: c for c in ThreatClass}
    kinds = {k.value: k for k in ActionKind}

    fired = 0
    mitigated = 0
    response_times: list[float] = []
    for incident in planted:
        klass = classes[incident["threat_class"]]
        correct_kinds = MITIGATIONS.get(klass, frozenset())
        incident_fired = False
        first_correct_ts: int | None = None
        for w in incident_windows(incident):
            trace = by_window.get(w)
            if trace is None:
                continue
            if trace["gate_fired"]:
                incident_fired = True
            action = trace.get("action")
            if action is None:
                continue
            if kinds.get(action["kind"]) in correct_kinds:
                ts = action["ts_micros"]
                if first_correct_ts is None or ts < first_correct_ts:
                    first_correct_ts = ts
        if incident_fired:
            fired += 1
        if first_correct_ts is not None and incident["first_event_ts_micros"] is not None:
            mitigated += 1
            response_times.append(
                (first_correct_ts - incident["first_event_ts_micros"]) / 1_000_000
            )

    return {
        "total": len(planted),
        "fired": fired,
        "mitigated": mitigated,
        "unmitigated": len(planted) - mitigated,
        "ae": (mitigated / fired) if fired else None,
        "mttr_s": float(np.mean(response_times)) if response_times else None,
    }


def measure_latency(durations_s: list[float]) -> dict | None:
    """Wall-clock per-window processing stats in milliseconds; absent when empty."""
    if not durations_s:
        return None
    ms = np.asarray(durations_s) * 1000.0
    return {
        "mean_ms": float(ms.mean()),
        "median_ms": float(np.median(ms)),
        "p95_ms": float(np.percentile(ms, 95)),
        "count": int(ms.size),
    }


def build_report(trace_rows: list[dict], truth_rows: list[dict]) -> MetricsReport:
    counts, acc, precision, recall, f1 = detection_metrics(trace_rows, truth_rows)
    sas = compute_sas(trace_rows, truth_rows)
    response = compute_mttr_ae(trace_rows, truth_rows)
    benign_windows = counts.fp + counts.tn
    return MetricsReport(
        counts=counts,
        acc=acc,
        precision=precision,
        recall=recall,
        f1=f1,
        perception=sas["perception"],
        comprehension=sas["comprehension"],
        projection=sas["projection"],
        sas=sas["overall"],
        ae=response["ae"],
        mttr_s=response["mttr_s"],
        total_incidents=response["total"],
        fired_incidents=response["fired"],
        mitigated_incidents=response["mitigated"],
        unmitigated_incidents=response["unmitigated"],
        false_positive_rate=(counts.fp / benign_windows) if benign_windows else None,
    )

"""In-memory property graph correlating signals across modalities.

Nodes are signals (or gate-fired incidents); undirected edges are temporal
(close in time) or semantic (shared source_ip / zone_id / clip_id). Incident
candidates are connected components within a time range. The graph persists
as a line-delimited text file with a counting header so truncation is
detectable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .core import (
    AudioFeatures,
    Duration,
    FrameFeatures,
    LogRecord,
    ModalEvent,
    Modality,
    SentinelError,
    Timestamp,
)


class DuplicateNode(SentinelError):
    """A node with this id already exists."""


class UnknownNode(SentinelError):
    """Referenced node id is not in the graph."""


class GraphParseError(SentinelError):
    """Persisted graph text is malformed or truncated."""


class NodeKind(Enum):
    LOG_EVENT = "LogEvent"
    VIDEO_FRAME = "VideoFrame"
    AUDIO_CLIP = "AudioClip"
    INCIDENT = "Incident"


class EdgeKind(Enum):
    TEMPORAL = "Temporal"
    SEMANTIC = "Semantic"


LINK_ATTRIBUTES = ("source_ip", "zone_id", "clip_id")
LINK_BASIS = {"source_ip": "ip-match", "zone_id": "zone-match", "clip_id": "clip-match"}
DEFAULT_LINK_WINDOW = Duration.from_seconds(30.0)

_NODE_KIND_FOR_MODALITY = {
    Modality.LOG: NodeKind.LOG_EVENT,
    Modality.VIDEO: NodeKind.VIDEO_FRAME,
    Modality.AUDIO: NodeKind.AUDIO_CLIP,
}


@dataclass(frozen=True)
class SignalNode:
    node_id: str
    kind: NodeKind
    ts: Timestamp
    attributes: tuple[tuple[str, str], ...]

    @property
    def attr_dict(self) -> dict[str, str]:
        return dict(self.attributes)


@dataclass(frozen=True)
class LinkEdge:
    from_id: str
    to_id: str
    kind: EdgeKind
    basis: str


def event_attributes(event: ModalEvent) -> dict[str, str]:
    payload = event.payload
    if isinstance(payload, LogRecord):
        return {"source_ip": payload.source_ip, "event_name": payload.event_name}
    if isinstance(payload, FrameFeatures):
        return {"zone_id": payload.zone_id, "clip_id": payload.clip_id}
    if isinstance(payload, AudioFeatures):
        return {"clip_id": payload.clip_id, "label": payload.label}
    return {}


class CorrelationGraph:
    """Single-writer graph; reads are safe while the orchestrator owns writes."""

    def __init__(self, link_window: Duration = DEFAULT_LINK_WINDOW):
        self.link_window = link_window
        self.nodes: dict[str, SignalNode] = {}
        # canonical undirected key: (min_id, max_id, kind)
        self.edges: dict[tuple[str, str, EdgeKind], LinkEdge] = {}

    # -- construction ------------------------------------------------------

    def add_node(self, node: SignalNode, auto_link: bool = True) -> str:
        if node.node_id in self.nodes:
            raise DuplicateNode(f"node id already present: {node.node_id}")
        self.nodes[node.node_id] = node
        if auto_link:
            for other_id in list(self.nodes):
                if other_id != node.node_id:
                    self.link_signals(node.node_id, other_id)
        return node.node_id

    def add_signal(self, event: ModalEvent, auto_link: bool = True) -> str:
        node = SignalNode(
            node_id=event.id,
            kind=_NODE_KIND_FOR_MODALITY[event.modality],
            ts=event.ts,
            attributes=tuple(sorted(event_attributes(event).items())),
        )
        return self.add_node(node, auto_link=auto_link)

    def add_incident(self, incident_id: str, ts: Timestamp,
                     attributes: dict[str, str]) -> str:
        node = SignalNode(
            node_id=incident_id,
            kind=NodeKind.INCIDENT,
            ts=ts,
            attributes=tuple(sorted(attributes.items())),
        )
        return self.add_node(node, auto_link=False)

    def link_signals(self, a: str, b: str) -> list[LinkEdge]:
        """Apply both link rules to the pair; returns the edges that hold.

        Rules are symmetric; edges are stored once under a canonical key.
        """
        if a not in self.nodes:
            raise UnknownNode(a)
        if b not in self.nodes:
            raise UnknownNode(b)
        if a == b:
            return []
        na, nb = self.nodes[a], self.nodes[b]
        created: list[LinkEdge] = []

        delta = abs(na.ts.micros - nb.ts.micros)
        if delta <= self.link_window.micros:
            basis = f"dt={delta / 1_000_000:.1f}s"
            created.append(self._put_edge(a, b, EdgeKind.TEMPORAL, basis))

        attrs_a, attrs_b = na.attr_dict, nb.attr_dict
        for attr in LINK_ATTRIBUTES:
            if attr in attrs_a and attrs_a.get(attr) == attrs_b.get(attr):
                created.append(self._put_edge(a, b, EdgeKind.SEMANTIC, LINK_BASIS[attr]))
                break
        return created

    def _put_edge(self, a: str, b: str, kind: EdgeKind, basis: str) -> LinkEdge:
        key = (min(a, b), max(a, b), kind)
        edge = LinkEdge(from_id=key[0], to_id=key[1], kind=kind, basis=basis)
        self.edges[key] = edge
        return edge

    # -- queries -----------------------------------------------------------

    def neighbors(self, node_id: str) -> set[str]:
        out = set()
        for (x, y, _kind) in self.edges:
            if x == node_id:
                out.add(y)
            elif y == node_id:
                out.add(x)
        return out

    def incident_candidates(self, start: Timestamp, end: Timestamp) -> list[list[str]]:
        """Connected components (both edge kinds) among nodes with ts in
        [start, end), size >= 2, ordered by earliest member ts."""
        in_range = {
            nid for nid, node in self.nodes.items()
            if start.micros <= node.ts.micros < end.micros
        }
        parent = {nid: nid for nid in in_range}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for (a, b, _kind) in self.edges:
            if a in in_range and b in in_range:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb

        groups: dict[str, list[str]] = {}
        for nid in in_range:
            groups.setdefault(find(nid), []).append(nid)
        components = [sorted(g) for g in groups.values() if len(g) >= 2]
        components.sort(key=lambda g: (min(self.nodes[n].ts.micros for n in g), g[0]))
        return components

    # -- persistence -------------------------------------------------------

    def export_text(self) -> str:
        lines = [
            json.dumps(
                {
                    "format": "sentinel-graph",
                    "version": 1,
                    "nodes": len(self.nodes),
                    "edges": len(self.edges),
                    "link_window_micros": self.link_window.micros,
                },
                sort_keys=True,
            )
        ]
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            lines.append(
                json.dumps(
                    {
                        "node": nid,
                        "kind": node.kind.value,
                        "ts_micros": node.ts.micros,
                        "attributes": node.attr_dict,
                    },
                    sort_keys=True,
                )
            )
        for key in sorted(self.edges, key=lambda k: (k[0], k[1], k[2].value)):
            edge = self.edges[key]
            lines.append(
                json.dumps(
                    {
                        "edge": [edge.from_id, edge.to_id],
                        "kind": edge.kind.value,
                        "basis": edge.basis,
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def import_text(cls, text: str) -> CorrelationGraph:
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise GraphParseError("empty graph file")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise GraphParseError(f"bad header: {exc}") from None
        if header.get("format") != "sentinel-graph":
            raise GraphParseError("missing sentinel-graph header")
        n_nodes = int(header["nodes"])
        n_edges = int(header["edges"])
        if len(lines) != 1 + n_nodes + n_edges:
            raise GraphParseError(
                f"expected {1 + n_nodes + n_edges} lines, found {len(lines)} (truncated?)"
            )
        graph = cls(link_window=Duration(int(header.get("link_window_micros", DEFAULT_LINK_WINDOW.micros))))
        kinds = {k.value: k for k in NodeKind}
        edge_kinds = {k.value: k for k in EdgeKind}
        for line in lines[1 : 1 + n_nodes]:
            try:
                obj = json.loads(line)
                node = SignalNode(
                    node_id=obj["node"],
                    kind=kinds[obj["kind"]],
                    ts=Timestamp(int(obj["ts_micros"])),
                    attributes=tuple(sorted(obj["attributes"].items())),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise GraphParseError(f"bad node line: {exc}") from None
            graph.nodes[node.node_id] = node
        for line in lines[1 + n_nodes :]:
            try:
                obj = json.loads(line)
                a, b = obj["edge"]
                kind = edge_kinds[obj["kind"]]
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise GraphParseError(f"bad edge line: {exc}") from None
            if a not in graph.nodes or b not in graph.nodes:
                raise GraphParseError(f"edge references unknown node: {a} -- {b}")
            graph.edges[(a, b, kind)] = LinkEdge(a, b, kind, obj["basis"])
        return graph

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.export_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> CorrelationGraph:
        return cls.import_text(Path(path).read_text(encoding="utf-8"))

    def structurally_equal(self, other: CorrelationGraph) -> bool:
        return self.nodes == other.nodes and set(self.edges) == set(other.edges)


def export_graph(graph: CorrelationGraph) -> str:
    return graph.export_text()


def import_graph(text: str) -> CorrelationGraph:
    return CorrelationGraph.import_text(text)

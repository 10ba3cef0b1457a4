import pytest

from sentinel.core import (
    AudioFeatures,
    Duration,
    FrameFeatures,
    LogRecord,
    ModalEvent,
    Modality,
    Timestamp,
    rng_for,
)
from sentinel.graph import (
    CorrelationGraph,
    DuplicateNode,
    EdgeKind,
    GraphParseError,
    NodeKind,
    SignalNode,
    UnknownNode,
    import_graph,
)


def log_event(event_id, ts_s, ip="10.0.0.1"):
    return ModalEvent(
        id=event_id,
        modality=Modality.LOG,
        ts=Timestamp.from_seconds(ts_s),
        payload=LogRecord(
            event_time=Timestamp.from_seconds(ts_s),
            event_name="ConsoleLogin",
            source_ip=ip,
            user_identity="u",
            region="r",
            error_code=None,
            numeric_features=(0.0,) * 5,
        ),
    )


def frame_event(event_id, ts_s, zone="zone-a", clip="clip-1"):
    return ModalEvent(
        id=event_id,
        modality=Modality.VIDEO,
        ts=Timestamp.from_seconds(ts_s),
        payload=FrameFeatures(clip, 0, Timestamp.from_seconds(ts_s), 200.0, zone, (0.0,)),
    )


def audio_event(event_id, ts_s, clip="clip-9"):
    return ModalEvent(
        id=event_id,
        modality=Modality.AUDIO,
        ts=Timestamp.from_seconds(ts_s),
        payload=AudioFeatures(clip, Timestamp.from_seconds(ts_s), "siren", 0.9, (0.0,)),
    )


def bare_node(node_id, ts_s, **attrs):
    return SignalNode(
        node_id=node_id,
        kind=NodeKind.LOG_EVENT,
        ts=Timestamp.from_seconds(ts_s),
        attributes=tuple(sorted(attrs.items())),
    )


class TestLinking:
    def test_first_insertion_no_edges(self):
        g = CorrelationGraph()
        g.add_signal(log_event("a", 0.0))
        assert g.edges == {}

    def test_duplicate_rejected(self):
        g = CorrelationGraph()
        g.add_signal(log_event("a", 0.0))
        with pytest.raises(DuplicateNode):
            g.add_signal(log_event("a", 1.0))

    def test_ip_match_semantic_edge(self):
        g = CorrelationGraph()
        g.add_signal(log_event("a", 0.0, ip="9.9.9.9"))
        g.add_signal(log_event("b", 100.0, ip="9.9.9.9"))  # outside temporal window
        edges = list(g.edges.values())
        assert len(edges) == 1
        assert edges[0].kind is EdgeKind.SEMANTIC
        assert edges[0].basis == "ip-match"

    def test_temporal_edge_only(self):
        g = CorrelationGraph()
        g.add_node(bare_node("a", 0.0))
        g.add_node(bare_node("b", 2.0), auto_link=False)
        edges = g.link_signals("a", "b")
        assert [e.kind for e in edges] == [EdgeKind.TEMPORAL]
        assert edges[0].basis == "dt=2.0s"

    def test_semantic_edge_outside_window(self):
        g = CorrelationGraph()
        g.add_node(bare_node("a", 0.0, zone_id="z9"))
        g.add_node(bare_node("b", 31.0, zone_id="z9"), auto_link=False)
        edges = g.link_signals("a", "b")
        assert [e.kind for e in edges] == [EdgeKind.SEMANTIC]
        assert edges[0].basis == "zone-match"

    def test_self_link_empty(self):
        g = CorrelationGraph()
        g.add_signal(log_event("a", 0.0))
        assert g.link_signals("a", "a") == []

    def test_unknown_node(self):
        g = CorrelationGraph()
        g.add_signal(log_event("a", 0.0))
        with pytest.raises(UnknownNode):
            g.link_signals("a", "missing")

    def test_edges_symmetric_and_deduplicated(self):
        g = CorrelationGraph()
        g.add_node(bare_node("a", 0.0, source_ip="1.1.1.1"))
        g.add_node(bare_node("b", 1.0, source_ip="1.1.1.1"), auto_link=False)
        g.link_signals("a", "b")
        g.link_signals("b", "a")
        assert len(g.edges) == 2  # one temporal + one semantic, stored once

    def test_edge_rules_revalidate(self):
        g = CorrelationGraph()
        events = [log_event(f"e{i}", i * 7.0, ip=f"10.0.0.{i % 3}") for i in range(8)]
        for e in events:
            g.add_signal(e)
        for (a, b, kind), edge in g.edges.items():
            na, nb = g.nodes[a], g.nodes[b]
            if kind is EdgeKind.TEMPORAL:
                assert abs(na.ts.micros - nb.ts.micros) <= g.link_window.micros
            else:
                shared = set(na.attr_dict.items()) & set(nb.attr_dict.items())
                assert any(k in ("source_ip", "zone_id", "clip_id") for k, _ in shared)


def brute_force_components(nodes, edges, start, end):
    """Oracle: BFS over the induced subgraph."""
    in_range = {n for n, ts in nodes.items() if start <= ts < end}
    adj = {n: set() for n in in_range}
    for a, b in edges:
        if a in in_range and b in in_range:
            adj[a].add(b)
            adj[b].add(a)
    seen = set()
    components = []
    for n in sorted(in_range):
        if n in seen:
            continue
        stack, comp = [n], set()
        while stack:
            cur = stack.pop()
            if cur in comp:
                continue
            comp.add(cur)
            stack.extend(adj[cur] - comp)
        seen |= comp
        if len(comp) >= 2:
            components.append(sorted(comp))
    return components


class TestIncidentCandidates:
    def test_chain_forms_single_component(self):
        g = CorrelationGraph()
        g.add_signal(log_event("log1", 0.0))
        g.add_signal(frame_event("vid1", 2.0))
        g.add_signal(audio_event("aud1", 4.0))
        comps = g.incident_candidates(Timestamp(0), Timestamp.from_seconds(10.0))
        assert comps == [["aud1", "log1", "vid1"]]

    def test_isolated_nodes_excluded(self):
        g = CorrelationGraph()
        g.add_node(bare_node("a", 0.0))
        g.add_node(bare_node("b", 500.0))
        assert g.incident_candidates(Timestamp(0), Timestamp.from_seconds(1000.0)) == []

    def test_two_pairs_ordered_by_earliest(self):
        g = CorrelationGraph()
        g.add_node(bare_node("late1", 100.0))
        g.add_node(bare_node("late2", 101.0))
        g.add_node(bare_node("early1", 5.0))
        g.add_node(bare_node("early2", 6.0))
        comps = g.incident_candidates(Timestamp(0), Timestamp.from_seconds(1000.0))
        assert comps == [["early1", "early2"], ["late1", "late2"]]

    def test_matches_brute_force_oracle_random_graphs(self):
        rng = rng_for(42, "graph-oracle")
        for trial in range(10):
            g = CorrelationGraph(link_window=Duration.from_seconds(10.0))
            n = int(rng.integers(5, 50))
            for i in range(n):
                ts = float(rng.uniform(0, 120))
                attrs = {}
                if rng.uniform() < 0.5:
                    attrs["source_ip"] = f"10.0.0.{int(rng.integers(4))}"
                if rng.uniform() < 0.3:
                    attrs["zone_id"] = f"z{int(rng.integers(3))}"
                g.add_node(bare_node(f"n{i:02d}", ts, **attrs))
            start, end = Timestamp(0), Timestamp.from_seconds(90.0)
            expected = brute_force_components(
                {nid: node.ts.micros for nid, node in g.nodes.items()},
                [(a, b) for (a, b, _k) in g.edges],
                start.micros, end.micros,
            )
            got = g.incident_candidates(start, end)
            assert sorted(map(tuple, got)) == sorted(map(tuple, expected))
            # ordering: earliest member first
            firsts = [min(g.nodes[n].ts.micros for n in comp) for comp in got]
            assert firsts == sorted(firsts)


class TestPersistence:
    def test_empty_graph_round_trip(self):
        g = CorrelationGraph()
        assert import_graph(g.export_text()).structurally_equal(g)

    def test_random_graph_round_trip(self):
        rng = rng_for(7, "graph-rt")
        g = CorrelationGraph()
        for i in range(10):
            g.add_node(bare_node(f"n{i}", float(rng.uniform(0, 60)),
                                 source_ip=f"10.0.0.{int(rng.integers(3))}"))
        g.add_incident("inc-1", Timestamp.from_seconds(30.0), {"threat_class": "Intrusion"})
        restored = import_graph(g.export_text())
        assert restored.structurally_equal(g)
        assert restored.nodes["inc-1"].kind is NodeKind.INCIDENT

    def test_truncated_file_rejected(self):
        g = CorrelationGraph()
        for i in range(6):
            g.add_node(bare_node(f"n{i}", float(i)))
        text = g.export_text()
        truncated = "\n".join(text.splitlines()[:-2])
        with pytest.raises(GraphParseError):
            import_graph(truncated)

    def test_garbage_rejected(self):
        with pytest.raises(GraphParseError):
            import_graph("not a graph\n")
        with pytest.raises(GraphParseError):
            import_graph("")

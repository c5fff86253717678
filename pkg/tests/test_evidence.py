import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanrca.errors import MissingEvidence
from spanrca.evidence import (
    GlobalEvidenceGraph,
    SelfEvidence,
    abnormal_nodes,
    build_evidence_graph,
    deserialize,
    serialize,
)
from spanrca.traces import build_trace_graph

from conftest import make_span, random_tree_spans


def evidences_for(graph, abnormal=()):
    return {sid: SelfEvidence(sid, graph.nodes[sid].service, sid in abnormal, f"k {sid}", "h") for sid in graph.nodes}


def test_four_node_graph(four_span_graph):
    g, _ = four_span_graph
    ge = build_evidence_graph(g, evidences_for(g))
    assert len(ge) == 4 and len(ge.edges) == 3
    assert set(ge.phi) == set(g.nodes)
    assert ge.children("A") == ["B", "C"]
    assert ge.depths()["D"] == 2


def test_missing_evidence(four_span_graph):
    g, _ = four_span_graph
    ev = evidences_for(g)
    del ev["C"]
    with pytest.raises(MissingEvidence):
        build_evidence_graph(g, ev)


def test_abnormal_nodes_preorder():
    spans = [make_span("a"), make_span("b", "a", ts=1), make_span("c", "b", ts=2), make_span("d", "a", ts=3), make_span("e", "d", ts=4)]
    g = build_trace_graph(spans, "T1")
    ge = build_evidence_graph(g, evidences_for(g, {"e", "c"}))
    assert [s for s, _ in abnormal_nodes(ge)] == ["c", "e"]
    assert abnormal_nodes(build_evidence_graph(g, evidences_for(g))) == []
    assert len(abnormal_nodes(build_evidence_graph(g, evidences_for(g, set(g.nodes))))) == 5


def test_serialization_stable_and_shape():
    g = build_trace_graph([make_span("x")], "T1")
    ge = build_evidence_graph(g, evidences_for(g))
    text = serialize(ge)
    assert text == serialize(deserialize(text))
    doc = json.loads(text)
    assert len(doc["nodes"]) == 1 and doc["edges"] == []
    assert set(doc["nodes"][0]) == {"span_id", "service_name", "is_abnormal", "key_symptoms", "hypothesis"}


def test_invalid_graphs_rejected():
    e = {"a": SelfEvidence("a", "s", False), "b": SelfEvidence("b", "s", False)}
    with pytest.raises(Exception):
        GlobalEvidenceGraph("a", ("a", "b"), frozenset(), e)
    with pytest.raises(Exception):
        GlobalEvidenceGraph("a", ("a", "b"), frozenset({("b", "a")}), e)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.integers(0, 10**6))
def test_round_trip_random_graphs(n, seed):
    rng = random.Random(seed)
    g = build_trace_graph(random_tree_spans(n, rng), "T1")
    ab = {s for s in g.nodes if rng.random() < 0.3}
    ge = build_evidence_graph(g, evidences_for(g, ab))
    back = deserialize(serialize(ge))
    assert back.nodes == ge.nodes and back.edges == ge.edges and dict(back.phi) == dict(ge.phi)
    assert back.order == ge.order

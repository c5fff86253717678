import pytest

from spanrca.errors import UnknownPod
from spanrca.model import ComponentRef, Level, Severity, Span, TopologyManifest, resolve_levels

MANIFEST = TopologyManifest.from_triples(
    [
        ("recommendationservice2-0", "recommendationservice", "node-5"),
        ("recommendationservice-1", "recommendationservice", "node-2"),
        ("frontend-0", "frontend", "node-5"),
    ]
)


def test_resolve_levels_lifts_pod_to_three_levels():
    got = resolve_levels(ComponentRef.pod("recommendationservice2-0"), MANIFEST)
    assert got == {
        ComponentRef.pod("recommendationservice2-0"),
        ComponentRef.service("recommendationservice"),
        ComponentRef.node("node-5"),
    }


def test_resolve_levels_single_pod_manifest():
    m = TopologyManifest.from_triples([("p", "s", "n")])
    assert len(resolve_levels(ComponentRef.pod("p"), m)) == 3


def test_resolve_levels_unknown_pod():
    with pytest.raises(UnknownPod):
        resolve_levels(ComponentRef.pod("ghost"), MANIFEST)
    with pytest.raises(KeyError):
        MANIFEST.node_of("ghost")


def test_manifest_queries():
    assert MANIFEST.replicas("recommendationservice") == ["recommendationservice2-0", "recommendationservice-1"]
    assert MANIFEST.pods_on("node-5") == ["recommendationservice2-0", "frontend-0"]
    assert MANIFEST.lookup("frontend") == ComponentRef.service("frontend")
    assert MANIFEST.lookup("node-2") == ComponentRef.node("node-2")
    assert MANIFEST.lookup("nope") is None
    assert MANIFEST.exists(ComponentRef.node("node-5"))
    assert not MANIFEST.exists(ComponentRef.service("node-5"))


def test_duplicate_pod_rejected():
    with pytest.raises(ValueError):
        TopologyManifest.from_triples([("p", "s", "n"), ("p", "s2", "n")])


def test_component_order_and_str():
    refs = [ComponentRef.node("a"), ComponentRef.service("a"), ComponentRef.pod("b"), ComponentRef.pod("a")]
    assert [str(r) for r in sorted(refs)] == ["POD:a", "POD:b", "SERVICE:a", "NODE:a"]
    assert ComponentRef("SERVICE", "x").level is Level.SERVICE


def test_span_invariants():
    with pytest.raises(ValueError):
        Span("t", "s", None, 0, "svc", "pod", "op", -1, "0")
    assert Span("t", "s", "", 0, "svc", "pod", "op", 0, "0").parent_span_id is None


@pytest.mark.parametrize(
    "raw,expected",
    [("warning", Severity.WARN), ("ERROR", Severity.ERROR), ("critical", Severity.FATAL), ("NOTICE", None)],
)
def test_severity_parse(raw, expected):
    assert Severity.parse(raw) is expected

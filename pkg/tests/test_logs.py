import pytest

from spanrca.ingest import LogStore
from spanrca.logs import RelevanceRule, log_components, query_logs, relevance
from spanrca.model import ComponentRef, LogEntry, Severity, TopologyManifest

M = TopologyManifest.from_triples([("a-0", "a", "n1"), ("a-1", "a", "n2"), ("b-0", "b", "n1")])
RULE = RelevanceRule()


@pytest.mark.parametrize(
    "sev,msg,expected",
    [
        (Severity.ERROR, "anything", True),
        (Severity.INFO, "connection timeout to upstream", True),
        (Severity.INFO, "Connection REFUSED", True),
        (Severity.INFO, "health check ok", False),
        (Severity.INFO, "GET /cart 503 in 12ms", True),
        (Severity.INFO, "GET /cart 200 in 15ms", False),
        (Severity.DEBUG, "served 5 items", False),
    ],
)
def test_relevance(sev, msg, expected):
    assert relevance(LogEntry(0, "a-0", sev, msg), RULE) is expected


def test_custom_rule():
    rule = RelevanceRule(Severity.FATAL, ("oom",), ())
    assert not relevance(LogEntry(0, "x", Severity.ERROR, "bad thing"), rule)
    assert relevance(LogEntry(0, "x", Severity.INFO, "OOMKilled"), rule)


def test_window_and_sorting():
    entries = [
        LogEntry(95, "a-0", Severity.ERROR, "e1"),
        LogEntry(105, "a-0", Severity.ERROR, "e2"),
        LogEntry(100, "a-0", Severity.ERROR, "e3"),
        LogEntry(10, "a-0", Severity.ERROR, "too early"),
        LogEntry(500, "a-0", Severity.ERROR, "too late"),
        LogEntry(100, "a-0", Severity.INFO, "fine"),
    ]
    q = query_logs(LogStore(entries), 100, 10, ComponentRef.pod("a-0"), M)
    assert [e.message for e in q] == ["e1", "e3", "e2"]
    assert not q.truncated


def test_replicas_in_scope_other_services_not():
    entries = [LogEntry(100, "a-1", Severity.ERROR, "replica"), LogEntry(100, "b-0", Severity.ERROR, "other")]
    q = query_logs(LogStore(entries), 100, 10, ComponentRef.pod("a-0"), M)
    assert [e.message for e in q] == ["replica"]
    assert log_components(ComponentRef.pod("a-0"), M) == ["a-0", "a-1"]


def test_empty_store():
    assert len(query_logs(LogStore(), 0, 10, ComponentRef.pod("a-0"), M)) == 0


def test_truncation():
    entries = [LogEntry(1000 + i, "a-0", Severity.ERROR, f"m{i}") for i in range(500)]
    q = query_logs(LogStore(entries), 1250, 1000, ComponentRef.pod("a-0"), M, max_entries=100)
    assert len(q) == 100 and q.truncated and q.matched == 500
    assert [e.timestamp for e in q] == list(range(1000, 1100))

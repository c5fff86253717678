import json

import pytest

from spanrca import ingest
from spanrca.errors import IngestError, MissingColumn, ParseError
from spanrca.model import ComponentRef, LogEntry, MetricPoint, Severity, TopologyManifest

from conftest import make_span

HEADER = ",".join(ingest.TRACE_COLUMNS) + "\n"


def test_traces_round_trip(tmp_path):
    spans = [
        make_span("a", None, 0, 30),
        make_span("b", "a", 1, 10),
        make_span("c", "a", 2, 5, status="500"),
    ]
    path = tmp_path / "traces.csv"
    ingest.write_traces(path, spans)
    got = ingest.load_traces(path)
    assert [s.span_id for s in got] == ["a", "b", "c"]
    assert got == spans


def test_empty_trace_file(tmp_path):
    path = tmp_path / "traces.csv"
    path.write_text(HEADER)
    assert ingest.load_traces(path) == []


def test_negative_duration_is_parse_error(tmp_path):
    path = tmp_path / "traces.csv"
    path.write_text(HEADER + "0,t,s,,pod,svc,op,-3,0\n")
    with pytest.raises(ParseError) as ei:
        ingest.load_traces(path)
    assert ei.value.line == 2


def test_missing_column(tmp_path):
    path = tmp_path / "traces.csv"
    path.write_text("trace_id,span_id\nt,s\n")
    with pytest.raises(MissingColumn):
        ingest.load_traces(path)


def test_metrics_store_counts_and_duplicates(tmp_path):
    points = [MetricPoint(t, cid, "cpu", float(t)) for cid in ("p1", "p2") for t in range(5)]
    path = tmp_path / "metrics.csv"
    ingest.write_metrics(path, points)
    store = ingest.load_metrics(path)
    assert store.n_series == 2 and store.n_points == 10

    dup = ingest.MetricStore([MetricPoint(1, "p", "m", 1.0), MetricPoint(1, "p", "m", 2.0)])
    ts, vs = dup.series(("p", "m"))
    assert ts.tolist() == [1, 1] and vs.tolist() == [1.0, 2.0]


def test_metrics_non_numeric(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("timestamp,cmdb_id,kpi_name,value\n1,p,m,abc\n")
    with pytest.raises(ParseError):
        ingest.load_metrics(path)


def test_metric_window_inclusive():
    store = ingest.MetricStore([MetricPoint(t, "p", "m", float(t)) for t in range(10)])
    ts, _ = store.window(("p", "m"), 3, 6)
    assert ts.tolist() == [3, 4, 5, 6]


def test_logs_sorted_unknown_severity_and_blank_lines(tmp_path):
    lines = [
        {"timestamp": 4, "cmdb_id": "p", "severity": "ERROR", "message": "d"},
        {"timestamp": 1, "cmdb_id": "p", "severity": "INFO", "message": "a"},
        {"timestamp": 3, "cmdb_id": "p", "severity": "NOTICE", "message": "c"},
        {"timestamp": 2, "cmdb_id": "p", "severity": "warn", "message": "b"},
    ]
    path = tmp_path / "logs.jsonl"
    path.write_text("\n".join(json.dumps(x) for x in lines[:2]) + "\n\n" + "\n".join(json.dumps(x) for x in lines[2:]) + "\n")
    store = ingest.load_logs(path)
    entries = store.all_entries()
    assert [e.message for e in entries] == ["a", "b", "c", "d"]
    assert entries[2].severity is Severity.INFO
    assert store.unknown_severity == 1
    assert store.skipped_lines == 1


def test_logs_round_trip(tmp_path):
    entries = [LogEntry(1, "p", Severity.WARN, "x"), LogEntry(2, "q", Severity.ERROR, "y")]
    path = tmp_path / "logs.jsonl"
    ingest.write_logs(path, entries)
    assert ingest.load_logs(path).all_entries() == entries


def test_bundle_round_trip_and_truth_validation(tmp_path):
    spans = [make_span("a", None, 0, 30, pod="p1", service="s1")]
    m = TopologyManifest.from_triples([("p1", "s1", "n1")])
    ingest.write_traces(tmp_path / ingest.TRACES_FILE, spans)
    ingest.write_metrics(tmp_path / ingest.METRICS_FILE, [MetricPoint(0, "p1", "cpu", 1.0)])
    ingest.write_logs(tmp_path / ingest.LOGS_FILE, [])
    ingest.write_manifest(tmp_path / ingest.MANIFEST_FILE, m)
    ingest.write_ground_truth(
        tmp_path / ingest.GROUND_TRUTH_FILE, [ingest.FailureCase("F1", "T1", ComponentRef.pod("p1"), "POD_LATENCY")]
    )
    b = ingest.load_bundle(tmp_path)
    assert b.manifest == m and b.trace_ids() == ["T1"]
    assert b.ground_truth[0].root_cause == ComponentRef.pod("p1")

    ingest.write_ground_truth(
        tmp_path / ingest.GROUND_TRUTH_FILE, [ingest.FailureCase("F1", "T1", ComponentRef.pod("ghost"))]
    )
    with pytest.raises(IngestError):
        ingest.load_bundle(tmp_path)


def test_missing_bundle_dir(tmp_path):
    with pytest.raises(IngestError):
        ingest.load_bundle(tmp_path / "nope")

import csv
import filecmp
import json

import pytest

from spanrca import fixtures
from spanrca.errors import InvalidSpec
from spanrca.fixtures import NODE_CPU, PACKET_LOSS_LIKE, POD_LATENCY, SERVICE_LATENCY, ScenarioSpec
from spanrca.ingest import load_bundle
from spanrca.model import ComponentRef, Level
from spanrca.traces import build_trace_graph, detect_failed_requests, normal_entry_latency

from oracles import mean_std

BUNDLE_FILES = ["traces.csv", "metrics.csv", "logs.jsonl", "manifest.json", "ground_truth.json", "scenario.json"]


def leaf_pod_spec(**kw):
    base = dict(fanouts=(2, 2), fault_kind=POD_LATENCY, target=ComponentRef.pod("svc06-1"), seed=5)
    base.update(kw)
    return ScenarioSpec(**base)


def test_naming_and_tree():
    assert fixtures.service_names((2, 2)) == ["frontend"] + [f"svc{i:02d}" for i in range(1, 7)]
    tree = fixtures.service_tree((2, 2))
    assert tree["frontend"] == ["svc01", "svc02"] and tree["svc02"] == ["svc05", "svc06"]
    m = fixtures.build_manifest((2,), 2, 4)
    assert [(p.name, p.node) for p in m.pods][:3] == [("frontend-0", "node-1"), ("frontend-1", "node-2"), ("svc01-0", "node-3")]


def test_leaf_pod_latency_detected(tmp_path):
    b = load_bundle(fixtures.generate(leaf_pod_spec(), tmp_path))
    case = b.ground_truth[0]
    graphs = [build_trace_graph(b.trace_spans(t), t) for t in b.trace_ids()]
    mu = normal_entry_latency(graphs, exclude={case.entry_trace_id})
    eps = detect_failed_requests(graphs, mu)
    assert [e.trace_id for e in eps] == [case.entry_trace_id]
    assert eps[0].ratio > 100
    assert case.root_cause == ComponentRef.pod("svc06-1")
    g = next(g for g in graphs if g.trace_id == case.entry_trace_id)
    assert any(s.cmdb_id == "svc06-1" for s in g.nodes.values())


def test_deterministic_bytes(tmp_path):
    a = fixtures.generate(leaf_pod_spec(), tmp_path / "a")
    b = fixtures.generate(leaf_pod_spec(), tmp_path / "b")
    match, mismatch, errors = filecmp.cmpfiles(a, b, BUNDLE_FILES, shallow=False)
    assert match == BUNDLE_FILES and not mismatch and not errors
    c = fixtures.generate(leaf_pod_spec(), tmp_path / "c", seed=6)
    assert (a / "metrics.csv").read_bytes() != (c / "metrics.csv").read_bytes()


def test_packet_loss_edge_ratio(tmp_path):
    spec = ScenarioSpec(fanouts=(2, 2), fault_kind=PACKET_LOSS_LIKE, target=ComponentRef.pod("svc02-0"), seed=2)
    b = load_bundle(fixtures.generate(spec, tmp_path))
    tid = b.ground_truth[0].entry_trace_id
    g = build_trace_graph(b.trace_spans(tid), tid)
    callee = next(s for s in g.nodes.values() if s.cmdb_id == "svc02-0")
    caller = g.nodes[callee.parent_span_id]
    assert caller.duration >= 1000 * callee.duration


@pytest.mark.parametrize(
    "kw",
    [
        dict(target=ComponentRef.pod("nope-0")),
        dict(magnitude=0),
        dict(magnitude=-5),
        dict(fault_kind="DISK_FULL"),
        dict(fault_kind=NODE_CPU),  # wrong level for the target
        dict(fanouts=()),
        dict(fanouts=(2, 0)),
        dict(fault_kind=PACKET_LOSS_LIKE, target=ComponentRef.pod("frontend-0")),
        dict(base_latency_ms={"ghost": 3}),
    ],
)
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpec):
        leaf_pod_spec(**kw)


def test_spec_json_round_trip(tmp_path):
    spec = leaf_pod_spec(base_latency_ms={"frontend": 4.0})
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert fixtures.load_spec(path) == spec
    path.write_text('{"fanouts": [2]}')
    with pytest.raises(InvalidSpec):
        fixtures.load_spec(path)
    path.write_text("[1, 2]")
    with pytest.raises(InvalidSpec):
        fixtures.load_spec(path)


def max_deviation_oracle(bundle_dir, t0, delta=60_000):
    """Component id with the largest |x - mean| / std inside the window, from the raw CSV."""
    series = {}
    with open(bundle_dir / "metrics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            series.setdefault((row["cmdb_id"], row["kpi_name"]), []).append((int(row["timestamp"]), float(row["value"])))
    best, best_z = None, -1.0
    for (cid, _), pts in series.items():
        ref = [v for t, v in pts if t < t0 - delta]
        win = [v for t, v in pts if t0 - delta <= t <= t0 + delta]
        mu, sd = mean_std(ref)
        z = max(abs(v - mu) / sd for v in win)
        if z > best_z:
            best, best_z = cid, z
    return best, best_z


@pytest.mark.parametrize("spec", fixtures.suite_scenarios(12, seed=3), ids=lambda s: f"{s.failure_id}-{s.fault_kind}")
def test_target_recoverable_by_max_deviation(spec, tmp_path):
    out = fixtures.generate(spec, tmp_path)
    b = load_bundle(out)
    case = b.ground_truth[0]
    t0 = b.trace_spans(case.entry_trace_id)[0].timestamp
    winner, z = max_deviation_oracle(out, t0)
    assert z >= 6
    target = case.root_cause
    if target.level is Level.SERVICE:
        assert b.manifest.service_of(winner) == target.name
    else:
        assert winner == target.name


def test_suite_shape_and_kinds():
    specs = fixtures.suite_scenarios(20, seed=0)
    assert {s.fault_kind for s in specs} == {POD_LATENCY, SERVICE_LATENCY, NODE_CPU, PACKET_LOSS_LIKE}
    sizes = [len(s.services) for s in specs]
    assert min(sizes) >= 15 and max(sizes) <= 63
    assert len({s.failure_id for s in specs}) == 20

"""Synthetic fault-injected telemetry bundles with ground truth.

Topology naming is deterministic so scenario files can name their targets:

* services form a tree given by ``fanouts``; in BFS order the root is
  ``frontend`` and the rest are ``svc01``, ``svc02``, ...
* each service has pods ``<service>-0 .. <service>-(k-1)``
* pods are placed round-robin (in service order) on ``node-1 .. node-N``

Every request calls each service exactly once, following the service tree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from spanrca import ingest
from spanrca.errors import InvalidSpec
from spanrca.ingest import FailureCase
from spanrca.model import ComponentRef, Level, LogEntry, MetricPoint, PodPlacement, Severity, Span, TopologyManifest

POD_LATENCY = "POD_LATENCY"
SERVICE_LATENCY = "SERVICE_LATENCY"
NODE_CPU = "NODE_CPU"
PACKET_LOSS_LIKE = "PACKET_LOSS_LIKE"
FAULT_LEVELS = {
    POD_LATENCY: Level.POD,
    SERVICE_LATENCY: Level.SERVICE,
    NODE_CPU: Level.NODE,
    PACKET_LOSS_LIKE: Level.POD,
}

START_MS = 1_700_000_000_000
HISTORY_MS = 90 * 60_000
FAULT_OFFSET_MS = 75 * 60_000
FAULT_LENGTH_MS = 10 * 60_000
METRIC_STEP_MS = 30_000
LOG_STEP_MS = 120_000

NOISE_FRACTION = 0.05  # noise sigma as a fraction of the series mean
NOISE_CLIP = 2.0       # noise is truncated at +-2 sigma
FAULT_SIGMAS = (6.0, 10.0)

POD_METRICS = {
    "container_cpu_usage": (20.0, 60.0),
    "container_memory_mb": (200.0, 800.0),
    "container_rx_dropped": (40.0, 80.0),
    "rrt_ms": (5.0, 30.0),
}
NODE_METRICS = {
    "system.cpu.pct_usage": (25.0, 50.0),
    "system.mem.pct_usage": (40.0, 70.0),
}
FAULT_METRICS = {
    POD_LATENCY: ("rrt_ms", "container_cpu_usage"),
    SERVICE_LATENCY: ("rrt_ms",),
    NODE_CPU: ("system.cpu.pct_usage",),
    PACKET_LOSS_LIKE: ("container_rx_dropped",),
}
FAULT_LOGS = {
    POD_LATENCY: "request processing exceeded deadline, upstream timeout",
    SERVICE_LATENCY: "handler failed: context deadline exceeded",
    NODE_CPU: "kernel: cpu throttling detected, runnable queue saturated",
    PACKET_LOSS_LIKE: "connection reset by peer while reading request body",
}
BACKGROUND_LOGS = (
    (Severity.INFO, "request handled"),
    (Severity.INFO, "cache refreshed"),
    (Severity.DEBUG, "pool stats collected"),
    (Severity.WARN, "slow GC pause observed"),
)


@dataclass(frozen=True)
class ScenarioSpec:
    fanouts: tuple[int, ...]
    fault_kind: str
    target: ComponentRef
    magnitude: float = 100.0
    pods_per_service: int = 2
    n_nodes: int = 4
    base_latency_ms: Mapping[str, float] = field(default_factory=dict)
    normal_traces: int = 30
    seed: int = 0
    failure_id: str = "F0001"

    def __post_init__(self):
        object.__setattr__(self, "fanouts", tuple(int(f) for f in self.fanouts))
        validate(self)

    @property
    def services(self) -> list[str]:
        return service_names(self.fanouts)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioSpec":
        try:
            fault = d["fault"]
            return cls(
                fanouts=tuple(d["fanouts"]),
                fault_kind=str(fault["kind"]),
                target=ComponentRef(Level[str(fault.get("level", FAULT_LEVELS.get(fault["kind"], Level.POD).name))], fault["name"]),
                magnitude=float(fault.get("magnitude", 100.0)),
                pods_per_service=int(d.get("pods_per_service", 2)),
                n_nodes=int(d.get("nodes", 4)),
                base_latency_ms=dict(d.get("base_latency_ms", {})),
                normal_traces=int(d.get("normal_traces", 30)),
                seed=int(d.get("seed", 0)),
                failure_id=str(d.get("failure_id", "F0001")),
            )
        except InvalidSpec:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"malformed scenario spec: {exc!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "fanouts": list(self.fanouts),
            "pods_per_service": self.pods_per_service,
            "nodes": self.n_nodes,
            "fault": {
                "kind": self.fault_kind,
                "level": self.target.level.name,
                "name": self.target.name,
                "magnitude": self.magnitude,
            },
            "base_latency_ms": dict(self.base_latency_ms),
            "normal_traces": self.normal_traces,
            "seed": self.seed,
            "failure_id": self.failure_id,
        }


def load_spec(path) -> ScenarioSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidSpec(f"cannot read scenario spec {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InvalidSpec("scenario spec must be a JSON object")
    return ScenarioSpec.from_dict(doc)


def service_names(fanouts) -> list[str]:
    count = 1
    width = 1
    for f in fanouts:
        width *= f
        count += width
    return ["frontend"] + [f"svc{i:02d}" for i in range(1, count)]


def service_tree(fanouts) -> dict[str, list[str]]:
    names = service_names(fanouts)
    tree: dict[str, list[str]] = {n: [] for n in names}
    level, nxt = [names[0]], 1
    for f in fanouts:
        new_level = []
        for parent in level:
            for _ in range(f):
                tree[parent].append(names[nxt])
                new_level.append(names[nxt])
                nxt += 1
        level = new_level
    return tree


def build_manifest(fanouts, pods_per_service: int, n_nodes: int) -> TopologyManifest:
    pods = []
    i = 0
    for svc in service_names(fanouts):
        for j in range(pods_per_service):
            pods.append(PodPlacement(f"{svc}-{j}", svc, f"node-{i % n_nodes + 1}"))
            i += 1
    return TopologyManifest(tuple(pods))


def validate(spec: ScenarioSpec) -> None:
    if not spec.fanouts or any(f < 1 for f in spec.fanouts):
        raise InvalidSpec("fanouts must be a non-empty list of positive integers")
    if spec.pods_per_service < 1 or spec.n_nodes < 1:
        raise InvalidSpec("pods_per_service and nodes must be >= 1")
    if spec.normal_traces < 1:
        raise InvalidSpec("normal_traces must be >= 1")
    if spec.fault_kind not in FAULT_LEVELS:
        raise InvalidSpec(f"unknown fault kind {spec.fault_kind!r}; expected one of {sorted(FAULT_LEVELS)}")
    if not (spec.magnitude > 0 and math.isfinite(spec.magnitude)):
        raise InvalidSpec("magnitude must be > 0")
    if spec.target.level is not FAULT_LEVELS[spec.fault_kind]:
        raise InvalidSpec(f"{spec.fault_kind} targets a {FAULT_LEVELS[spec.fault_kind].name}, got {spec.target}")
    manifest = build_manifest(spec.fanouts, spec.pods_per_service, spec.n_nodes)
    if not manifest.exists(spec.target):
        raise InvalidSpec(f"target {spec.target} does not exist in the generated topology")
    if spec.fault_kind == PACKET_LOSS_LIKE and manifest.service_of(spec.target.name) == "frontend":
        raise InvalidSpec("PACKET_LOSS_LIKE needs a callee pod; the entry service has no caller")
    unknown = set(spec.base_latency_ms) - set(service_names(spec.fanouts))
    if unknown:
        raise InvalidSpec(f"base_latency_ms names unknown services {sorted(unknown)}")


# -- generation ---------------------------------------------------------------


class _Trace:
    """Span layout for one request before it is turned into Span rows."""

    def __init__(self, tree: dict[str, list[str]], pods: dict[str, str], own: dict[str, int]):
        self.tree = tree
        self.pods = pods
        self.own = dict(own)
        self.extra: dict[str, int] = {}       # added to a service's own time
        self.override: dict[str, int] = {}    # forced total duration

    def durations(self) -> dict[str, int]:
        out: dict[str, int] = {}

        def visit(svc: str) -> int:
            if svc in self.override:
                for c in self.tree[svc]:
                    visit(c)
                out[svc] = self.override[svc]
                return out[svc]
            total = self.own[svc] + self.extra.get(svc, 0) + sum(visit(c) + 1 for c in self.tree[svc])
            out[svc] = total
            return total

        visit("frontend")
        return out

    def spans(self, trace_id: str, start: int) -> list[Span]:
        d = self.durations()
        rows: list[Span] = []
        ids = {svc: f"{trace_id}.{k:03d}" for k, svc in enumerate(self.tree)}

        def emit(svc: str, parent: Optional[str], ts: int):
            rows.append(
                Span(trace_id, ids[svc], parent, ts, svc, self.pods[svc], f"{svc}.Handle", d[svc], "0")
            )
            cursor = ts + max(1, self.own[svc] // 2)
            for c in self.tree[svc]:
                emit(c, ids[svc], cursor)
                cursor += d[c] + 1

        emit("frontend", None, start)
        return rows


def _noise(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.clip(rng.standard_normal(size), -NOISE_CLIP, NOISE_CLIP)


def generate(spec: ScenarioSpec, out_dir, seed: Optional[int] = None) -> Path:
    """Write a dataset bundle for ``spec`` into ``out_dir`` and return the directory."""
    validate(spec)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tree = service_tree(spec.fanouts)
    services = list(tree)
    manifest = build_manifest(spec.fanouts, spec.pods_per_service, spec.n_nodes)
    replicas = {s: manifest.replicas(s) for s in services}
    base = {s: float(spec.base_latency_ms.get(s, rng.uniform(3.0, 15.0))) for s in services}
    fault_start = START_MS + FAULT_OFFSET_MS
    fault_end = fault_start + FAULT_LENGTH_MS

    def own_times() -> dict[str, int]:
        return {s: max(1, int(round(base[s] * rng.uniform(0.9, 1.1)))) for s in services}

    # normal traffic, all of it before the fault
    spans: list[Span] = []
    starts = np.sort(rng.integers(START_MS + 60_000, fault_start - 10 * 60_000, size=spec.normal_traces))
    entry_max = 0
    for i, t in enumerate(starts.tolist()):
        pods = {s: replicas[s][int(rng.integers(len(replicas[s])))] for s in services}
        layout = _Trace(tree, pods, own_times())
        trace_spans = layout.spans(f"t{i:04d}", int(t))
        entry_max = max(entry_max, trace_spans[0].duration)
        spans.extend(trace_spans)

    # the failing request
    target = spec.target
    pods = {s: replicas[s][int(rng.integers(len(replicas[s])))] for s in services}
    if target.level is Level.POD:
        pods[manifest.service_of(target.name)] = target.name
    elif target.level is Level.NODE:
        for s in services:
            on_node = [p for p in replicas[s] if manifest.node_of(p) == target.name]
            if on_node:
                pods[s] = on_node[0]
    layout = _Trace(tree, pods, own_times())
    delay = int(math.ceil(spec.magnitude * entry_max))
    if spec.fault_kind in (POD_LATENCY, SERVICE_LATENCY):
        svc = target.name if target.level is Level.SERVICE else manifest.service_of(target.name)
        layout.extra[svc] = delay
    elif spec.fault_kind == NODE_CPU:
        for s, p in pods.items():
            if manifest.node_of(p) == target.name:
                layout.extra[s] = delay
    else:  # PACKET_LOSS_LIKE: the caller waits, the callee itself is fast
        callee = manifest.service_of(target.name)
        caller = next(p for p, kids in tree.items() if callee in kids)
        callee_d = layout.durations()[callee]
        layout.extra[caller] = max(delay, 1000 * callee_d + 1)
    fail_trace_id = f"tf{spec.failure_id}"
    spans.extend(layout.spans(fail_trace_id, fault_start + 5_000))
    spans.sort(key=lambda s: (s.timestamp, s.trace_id, s.span_id))

    metrics = _metrics(spec, manifest, rng, fault_start, fault_end)
    logs = _logs(spec, manifest, rng, fault_start, fault_end)
    case = FailureCase(spec.failure_id, fail_trace_id, target, spec.fault_kind)

    ingest.write_traces(out / ingest.TRACES_FILE, spans)
    ingest.write_metrics(out / ingest.METRICS_FILE, metrics)
    ingest.write_logs(out / ingest.LOGS_FILE, logs)
    ingest.write_manifest(out / ingest.MANIFEST_FILE, manifest)
    ingest.write_ground_truth(out / ingest.GROUND_TRUTH_FILE, [case])
    (out / "scenario.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")
    return out


def _faulty_series(spec: ScenarioSpec, manifest: TopologyManifest) -> set[tuple[str, str]]:
    names = FAULT_METRICS[spec.fault_kind]
    t = spec.target
    if t.level is Level.NODE:
        ids = [t.name]
    elif t.level is Level.SERVICE:
        ids = manifest.replicas(t.name)
    else:
        ids = [t.name]
    return {(cid, m) for cid in ids for m in names}


def _metrics(spec, manifest, rng, fault_start, fault_end) -> list[MetricPoint]:
    stamps = np.arange(START_MS, START_MS + HISTORY_MS + 1, METRIC_STEP_MS, dtype=np.int64)
    in_fault = (stamps >= fault_start) & (stamps <= fault_end)
    faulty = _faulty_series(spec, manifest)
    series = [(p.name, POD_METRICS) for p in manifest.pods] + [(n, NODE_METRICS) for n in sorted(manifest.nodes)]
    points: list[MetricPoint] = []
    for cid, catalogue in series:
        for name, (lo, hi) in catalogue.items():
            mean = float(rng.uniform(lo, hi))
            sigma = NOISE_FRACTION * mean
            values = mean + sigma * _noise(rng, stamps.size)
            if (cid, name) in faulty:
                values[in_fault] = mean + sigma * rng.uniform(*FAULT_SIGMAS, size=int(in_fault.sum()))
            values = np.round(values, 4)
            points.extend(MetricPoint(int(t), cid, name, float(v)) for t, v in zip(stamps, values))
    points.sort(key=lambda p: (p.timestamp, p.component_id, p.metric_name))
    return points


def _logs(spec, manifest, rng, fault_start, fault_end) -> list[LogEntry]:
    entries: list[LogEntry] = []
    for p in manifest.pods:
        t = START_MS + int(rng.integers(LOG_STEP_MS))
        while t < START_MS + HISTORY_MS:
            sev, msg = BACKGROUND_LOGS[int(rng.integers(len(BACKGROUND_LOGS)))]
            entries.append(LogEntry(t, p.name, sev, msg))
            t += LOG_STEP_MS
    t = spec.target
    if t.level is Level.SERVICE:
        sources = manifest.replicas(t.name)
    else:
        sources = [t.name]
    message = FAULT_LOGS[spec.fault_kind]
    for cid in sources:
        ts = fault_start + int(rng.integers(1_000, 10_000))
        while ts < fault_end:
            entries.append(LogEntry(ts, cid, Severity.ERROR, message))
            ts += int(rng.integers(15_000, 30_000))
    entries.sort(key=lambda e: (e.timestamp, e.component_id))
    return entries


# -- scenario suites ----------------------------------------------------------

SUITE_SHAPES = ((2, 2, 2), (3, 4), (4, 3), (2, 3, 3), (2, 2, 2, 2), (3, 3, 3), (2, 2, 2, 2, 2))
SUITE_KINDS = (POD_LATENCY, SERVICE_LATENCY, NODE_CPU, PACKET_LOSS_LIKE)


def suite_scenarios(count: int = 20, seed: int = 0, magnitude: float = 100.0) -> list[ScenarioSpec]:
    """Mixed single-fault scenarios over trees of 15-63 spans, round-robin over fault kinds."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind = SUITE_KINDS[i % len(SUITE_KINDS)]
        fanouts = SUITE_SHAPES[int(rng.integers(len(SUITE_SHAPES)))]
        manifest = build_manifest(fanouts, 2, 4)
        services = service_names(fanouts)
        if kind == NODE_CPU:
            target = ComponentRef.node(sorted(manifest.nodes)[int(rng.integers(len(manifest.nodes)))])
        elif kind == SERVICE_LATENCY:
            target = ComponentRef.service(services[int(rng.integers(len(services)))])
        else:
            pool = [p.name for p in manifest.pods if kind != PACKET_LOSS_LIKE or p.service != "frontend"]
            target = ComponentRef.pod(pool[int(rng.integers(len(pool)))])
        out.append(
            ScenarioSpec(
                fanouts=fanouts,
                fault_kind=kind,
                target=target,
                magnitude=magnitude,
                seed=int(rng.integers(2**31)),
                failure_id=f"F{i + 1:04d}",
            )
        )
    return out


def generate_suite(out_dir, count: int = 20, seed: int = 0) -> list[Path]:
    root = Path(out_dir)
    return [generate(spec, root / spec.failure_id) for spec in suite_scenarios(count, seed)]

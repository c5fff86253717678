"""Dataset loading: traces, metrics, logs, topology manifest and ground truth.

A dataset directory has a fixed layout::

    traces.csv  metrics.csv  logs.jsonl  manifest.json  ground_truth.json

All timestamps are epoch milliseconds.
"""

from __future__ import annotations

import csv
import json
import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from spanrca.errors import IngestError, MissingColumn, ParseError
from spanrca.model import (
    ComponentRef,
    Level,
    LogEntry,
    MetricPoint,
    PodPlacement,
    Severity,
    Span,
    TopologyManifest,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "timestamp",
    "trace_id",
    "span_id",
    "parent_span_id",
    "cmdb_id",
    "service_name",
    "operation_name",
    "duration_ms",
    "status_code",
)
METRIC_COLUMNS = ("timestamp", "cmdb_id", "kpi_name", "value")

TRACES_FILE = "traces.csv"
METRICS_FILE = "metrics.csv"
LOGS_FILE = "logs.jsonl"
MANIFEST_FILE = "manifest.json"
GROUND_TRUTH_FILE = "ground_truth.json"

MetricKey = tuple[str, str]  # (component_id, metric_name)


class MetricStore:
    """Immutable per-series store; each series is sorted by timestamp (stable)."""

    def __init__(self, points: Iterable[MetricPoint] = ()):
        grouped: dict[MetricKey, list[tuple[int, float]]] = {}
        for p in points:
            grouped.setdefault((p.component_id, p.metric_name), []).append((p.timestamp, p.value))
        self._series: dict[MetricKey, tuple[np.ndarray, np.ndarray]] = {}
        self._by_component: dict[str, list[str]] = {}
        for key in sorted(grouped):
            rows = sorted(grouped[key], key=lambda r: r[0])  # stable: duplicates keep file order
            ts = np.fromiter((r[0] for r in rows), dtype=np.int64, count=len(rows))
            vs = np.fromiter((r[1] for r in rows), dtype=np.float64, count=len(rows))
            ts.flags.writeable = False
            vs.flags.writeable = False
            self._series[key] = (ts, vs)
            self._by_component.setdefault(key[0], []).append(key[1])

    def __len__(self) -> int:
        return len(self._series)

    @property
    def n_series(self) -> int:
        return len(self._series)

    @property
    def n_points(self) -> int:
        return sum(len(ts) for ts, _ in self._series.values())

    def keys(self) -> list[MetricKey]:
        return list(self._series)

    def keys_for(self, component_id: str) -> list[MetricKey]:
        return [(component_id, m) for m in self._by_component.get(component_id, ())]

    def series(self, key: MetricKey) -> tuple[np.ndarray, np.ndarray]:
        return self._series[key]

    def window(self, key: MetricKey, start: int, end: int) -> tuple[np.ndarray, np.ndarray]:
        """Points with start <= t <= end."""
        ts, vs = self._series.get(key, (np.empty(0, np.int64), np.empty(0)))
        lo = int(np.searchsorted(ts, start, side="left"))
        hi = int(np.searchsorted(ts, end, side="right"))
        return ts[lo:hi], vs[lo:hi]

    def points(self) -> Iterator[MetricPoint]:
        for (cid, name), (ts, vs) in self._series.items():
            for t, v in zip(ts.tolist(), vs.tolist()):
                yield MetricPoint(t, cid, name, v)


class LogStore:
    """Immutable log index, entries per component sorted by timestamp."""

    def __init__(self, entries: Iterable[LogEntry] = (), *, unknown_severity: int = 0, skipped_lines: int = 0):
        by_comp: dict[str, list[LogEntry]] = {}
        for e in entries:
            by_comp.setdefault(e.component_id, []).append(e)
        self._entries = {k: tuple(sorted(v, key=lambda e: e.timestamp)) for k, v in by_comp.items()}
        self._stamps = {k: [e.timestamp for e in v] for k, v in self._entries.items()}
        self.unknown_severity = unknown_severity
        self.skipped_lines = skipped_lines

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def components(self) -> list[str]:
        return sorted(self._entries)

    def entries_for(self, component_id: str) -> tuple[LogEntry, ...]:
        return self._entries.get(component_id, ())

    def window(self, component_id: str, start: int, end: int) -> Sequence[LogEntry]:
        stamps = self._stamps.get(component_id)
        if not stamps:
            return ()
        lo = bisect_left(stamps, start)
        hi = bisect_right(stamps, end)
        return self._entries[component_id][lo:hi]

    def all_entries(self) -> list[LogEntry]:
        out = [e for v in self._entries.values() for e in v]
        out.sort(key=lambda e: (e.timestamp, e.component_id))
        return out


@dataclass(frozen=True)
class FailureCase:
    failure_id: str
    entry_trace_id: str
    root_cause: ComponentRef
    fault_kind: str = ""


@dataclass
class DatasetBundle:
    spans: list[Span]
    metrics: MetricStore
    logs: LogStore
    manifest: TopologyManifest
    ground_truth: Optional[list[FailureCase]] = None
    path: Optional[Path] = None
    load_seconds: float = 0.0
    _by_trace: dict[str, list[Span]] = field(default_factory=dict, init=False, repr=False)

    def trace_spans(self, trace_id: str) -> list[Span]:
        if not self._by_trace:
            for s in self.spans:
                self._by_trace.setdefault(s.trace_id, []).append(s)
        return self._by_trace.get(trace_id, [])

    def trace_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.spans:
            seen.setdefault(s.trace_id)
        return list(seen)


# -- readers ------------------------------------------------------------------


def _int(raw: str, what: str, path, line: int) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        try:
            f = float(raw)
        except (TypeError, ValueError):
            raise ParseError(path, line, f"{what} is not an integer: {raw!r}") from None
        if not f.is_integer():
            raise ParseError(path, line, f"{what} is not an integer: {raw!r}")
        return int(f)


def _read_csv(path, columns: Sequence[str]) -> Iterator[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(columns):
            raise MissingColumn(path, columns, header or [])
        for row in reader:
            if not row:
                continue
            if len(row) != len(columns):
                raise ParseError(path, reader.line_num, f"expected {len(columns)} fields, got {len(row)}")
            yield reader.line_num, row


def load_traces(path) -> list[Span]:
    spans = []
    for line, row in _read_csv(path, TRACE_COLUMNS):
        ts, trace_id, span_id, parent, cmdb, svc, op, dur, status = row
        duration = _int(dur, "duration_ms", path, line)
        if duration < 0:
            raise ParseError(path, line, f"negative duration {duration}")
        if not span_id or not trace_id:
            raise ParseError(path, line, "empty trace_id or span_id")
        spans.append(
            Span(
                trace_id=trace_id,
                span_id=span_id,
                parent_span_id=parent or None,
                timestamp=_int(ts, "timestamp", path, line),
                service=svc,
                cmdb_id=cmdb,
                operation=op,
                duration=duration,
                status=status,
            )
        )
    return spans


def load_metrics(path) -> MetricStore:
    points = []
    for line, row in _read_csv(path, METRIC_COLUMNS):
        ts, cmdb, kpi, raw = row
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(path, line, f"non-numeric value {raw!r}") from None
        if not np.isfinite(value):
            raise ParseError(path, line, f"non-finite value {raw!r}")
        points.append(MetricPoint(_int(ts, "timestamp", path, line), cmdb, kpi, value))
    return MetricStore(points)


def load_logs(path) -> LogStore:
    entries = []
    unknown = skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                skipped += 1
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "log line is not a JSON object")
            try:
                ts = obj["timestamp"]
                cmdb = obj["cmdb_id"]
                sev_raw = obj["severity"]
            except KeyError as exc:
                raise ParseError(path, line_no, f"missing field {exc.args[0]!r}") from None
            if isinstance(ts, bool) or not isinstance(ts, (int, float)) or int(ts) != ts:
                raise ParseError(path, line_no, f"timestamp must be an integer, got {ts!r}")
            message = obj.get("message", "")
            if message is None:
                raise ParseError(path, line_no, "message must not be null")
            sev = Severity.parse(str(sev_raw))
            if sev is None:
                unknown += 1
                sev = Severity.INFO
            entries.append(LogEntry(int(ts), str(cmdb), sev, str(message)))
    if unknown:
        log.warning("%s: %d log lines with unknown severity mapped to INFO", path, unknown)
    return LogStore(entries, unknown_severity=unknown, skipped_lines=skipped)


def load_manifest(path) -> TopologyManifest:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        pods = [PodPlacement(p["name"], p["service"], p["node"]) for p in doc["pods"]]
    except (KeyError, TypeError) as exc:
        raise IngestError(f"{path}: malformed manifest ({exc})") from None
    try:
        return TopologyManifest(tuple(pods))
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None


def load_ground_truth(path) -> list[FailureCase]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise IngestError(f"{path}: ground truth must be a JSON list")
    cases = []
    for i, item in enumerate(doc):
        try:
            cases.append(
                FailureCase(
                    failure_id=str(item["failure_id"]),
                    entry_trace_id=str(item["entry_trace_id"]),
                    root_cause=ComponentRef(Level[item["level"]], item["name"]),
                    fault_kind=str(item.get("fault_kind", "")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}: ground truth entry {i} malformed ({exc})") from None
    return cases


def load_bundle(data_dir, *, validate: bool = True) -> DatasetBundle:
    import time

    root = Path(data_dir)
    if not root.is_dir():
        raise IngestError(f"dataset directory not found: {root}")
    started = time.perf_counter()
    spans = load_traces(root / TRACES_FILE)
    metrics = load_metrics(root / METRICS_FILE) if (root / METRICS_FILE).exists() else MetricStore()
    logs = load_logs(root / LOGS_FILE) if (root / LOGS_FILE).exists() else LogStore()
    manifest = load_manifest(root / MANIFEST_FILE)
    gt_path = root / GROUND_TRUTH_FILE
    truth = load_ground_truth(gt_path) if gt_path.exists() else None
    bundle = DatasetBundle(spans, metrics, logs, manifest, truth, path=root)
    if validate and truth:
        _validate_truth(bundle)
    bundle.load_seconds = time.perf_counter() - started
    return bundle


def _validate_truth(bundle: DatasetBundle) -> None:
    trace_ids = {s.trace_id for s in bundle.spans}
    known = {s.cmdb_id for s in bundle.spans} | {s.service for s in bundle.spans}
    for case in bundle.ground_truth or ():
        if case.entry_trace_id not in trace_ids:
            raise IngestError(f"failure {case.failure_id}: unknown entry trace {case.entry_trace_id}")
        if not (bundle.manifest.exists(case.root_cause) or case.root_cause.name in known):
            raise IngestError(f"failure {case.failure_id}: unknown root cause {case.root_cause}")


# -- writers ------------------------------------------------------------------


def write_traces(path, spans: Iterable[Span]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for s in spans:
            w.writerow(
                [s.timestamp, s.trace_id, s.span_id, s.parent_span_id or "", s.cmdb_id,
                 s.service, s.operation, s.duration, s.status]
            )


def write_metrics(path, points: Iterable[MetricPoint]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for p in points:
            w.writerow([p.timestamp, p.component_id, p.metric_name, repr(float(p.value))])


def write_logs(path, entries: Iterable[LogEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(
                json.dumps(
                    {"timestamp": e.timestamp, "cmdb_id": e.component_id,
                     "severity": e.severity.name, "message": e.message}
                )
                + "\n"
            )


def write_manifest(path, manifest: TopologyManifest) -> None:
    doc = {"pods": [{"name": p.name, "service": p.service, "node": p.node} for p in manifest.pods]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def write_ground_truth(path, cases: Iterable[FailureCase]) -> None:
    doc = [
        {"failure_id": c.failure_id, "entry_trace_id": c.entry_trace_id,
         "level": c.root_cause.level.name, "name": c.root_cause.name, "fault_kind": c.fault_kind}
        for c in cases
    ]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

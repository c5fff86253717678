"""Trace graph construction, child-span queries and failed-request detection."""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

from spanrca.errors import (
    CycleDetected,
    DuplicateSpan,
    EmptyTrace,
    MultipleRoots,
    NonPositiveBaseline,
    OrphanSpan,
    UnknownSpan,
)
from spanrca.model import Span

FAILURE_LATENCY_FACTOR = 100.0


@dataclass(frozen=True)
class ChildRecord:
    """One child span as seen from its caller: <t, s', svc, op, d, status>."""

    timestamp: int
    span_id: str
    service: str
    operation: str
    duration: int
    status: str

    @classmethod
    def of(cls, span: Span) -> "ChildRecord":
        return cls(span.timestamp, span.span_id, span.service, span.operation, span.duration, span.status)


@dataclass(frozen=True)
class TraceGraph:
    trace_id: str
    nodes: Mapping[str, Span]
    children_of: Mapping[str, tuple[str, ...]]
    entry_span_id: str

    @property
    def entry(self) -> Span:
        return self.nodes[self.entry_span_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def span(self, span_id: str) -> Span:
        try:
            return self.nodes[span_id]
        except KeyError:
            raise UnknownSpan(span_id) from None

    def child_ids(self, span_id: str) -> tuple[str, ...]:
        if span_id not in self.nodes:
            raise UnknownSpan(span_id)
        return self.children_of[span_id]

    def parent(self, span_id: str) -> Optional[str]:
        return self.span(span_id).parent_span_id

    def edges(self) -> list[tuple[str, str]]:
        return [(p, c) for p in self.preorder() for c in self.children_of[p]]

    def preorder(self) -> list[str]:
        out, stack = [], [self.entry_span_id]
        while stack:
            sid = stack.pop()
            out.append(sid)
            stack.extend(reversed(self.children_of[sid]))
        return out

    def depths(self) -> dict[str, int]:
        depth = {self.entry_span_id: 0}
        for sid in self.preorder():
            for c in self.children_of[sid]:
                depth[c] = depth[sid] + 1
        return depth

    def is_leaf(self, span_id: str) -> bool:
        return not self.child_ids(span_id)


@dataclass(frozen=True)
class FailureEpisode:
    trace_id: str
    entry_latency: int
    normal_avg: float
    ratio: float


def group_by_trace(spans: Iterable[Span]) -> dict[str, list[Span]]:
    out: dict[str, list[Span]] = {}
    for s in spans:
        out.setdefault(s.trace_id, []).append(s)
    return out


def build_trace_graph(spans: Iterable[Span], trace_id: str) -> TraceGraph:
    members = [s for s in spans if s.trace_id == trace_id]
    if not members:
        raise EmptyTrace(f"no spans for trace {trace_id}")
    nodes: dict[str, Span] = {}
    for s in members:
        if s.span_id in nodes:
            raise DuplicateSpan(f"trace {trace_id}: duplicate span_id {s.span_id}")
        nodes[s.span_id] = s

    roots = [s.span_id for s in members if s.parent_span_id is None]
    if len(roots) > 1:
        raise MultipleRoots(trace_id, roots)
    for s in members:
        if s.parent_span_id is not None and s.parent_span_id not in nodes:
            raise OrphanSpan(s.span_id, s.parent_span_id)
    if not roots:
        raise CycleDetected(f"trace {trace_id}: no entry span, parent links form a cycle")

    kids: dict[str, list[Span]] = {sid: [] for sid in nodes}
    for s in members:
        if s.parent_span_id is not None:
            kids[s.parent_span_id].append(s)
    children = {
        sid: tuple(c.span_id for c in sorted(v, key=lambda c: (c.timestamp, c.span_id)))
        for sid, v in kids.items()
    }

    seen = {roots[0]}
    stack = [roots[0]]
    while stack:
        for c in children[stack.pop()]:
            seen.add(c)
            stack.append(c)
    if len(seen) != len(nodes):
        stuck = sorted(set(nodes) - seen)
        raise CycleDetected(f"trace {trace_id}: spans {stuck[:5]} unreachable from entry (cycle)")

    return TraceGraph(
        trace_id=trace_id,
        nodes=MappingProxyType(nodes),
        children_of=MappingProxyType(children),
        entry_span_id=roots[0],
    )


def children(graph: TraceGraph, span_id: str) -> list[ChildRecord]:
    return [ChildRecord.of(graph.nodes[c]) for c in graph.child_ids(span_id)]


def dominant_child_share(graph: TraceGraph, span_id: str) -> Optional[tuple[str, float]]:
    """Child carrying the largest fraction of this span's duration, if any."""
    kids = graph.child_ids(span_id)
    total = graph.nodes[span_id].duration
    if not kids or total == 0:
        return None
    best = max(kids, key=lambda c: graph.nodes[c].duration)  # first max wins
    return best, min(1.0, graph.nodes[best].duration / total)


def detect_failed_requests(
    graphs: Iterable[TraceGraph], normal_avg: float, factor: float = FAILURE_LATENCY_FACTOR
) -> list[FailureEpisode]:
    """Requests whose entry latency strictly exceeds ``factor`` x the normal average."""
    if not normal_avg > 0:
        raise NonPositiveBaseline(f"normal average latency must be positive, got {normal_avg}")
    episodes = []
    for g in graphs:
        d = g.entry.duration
        if d > factor * normal_avg:
            episodes.append(FailureEpisode(g.trace_id, d, float(normal_avg), d / normal_avg))
    return episodes


def normal_entry_latency(graphs: Iterable[TraceGraph], exclude: Iterable[str] = ()) -> float:
    """Mean entry-span duration over traces not listed in ``exclude``."""
    skip = set(exclude)
    durations = [g.entry.duration for g in graphs if g.trace_id not in skip]
    if not durations:
        raise NonPositiveBaseline("no normal traces to estimate the latency baseline from")
    return sum(durations) / len(durations)

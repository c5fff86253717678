"""Structured agent evidence and the trace-isomorphic global evidence graph."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Mapping

from spanrca.errors import MissingEvidence, RCLError
from spanrca.traces import TraceGraph

FIELD_CAP = 500
SELF = "self"


def cap(text: str, limit: int = FIELD_CAP) -> str:
    text = "" if text is None else str(text)
    return text if len(text) <= limit else text[:limit]


def clamp01(x: float) -> float:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return 0.0
    return min(1.0, max(0.0, float(x)))


@dataclass(frozen=True)
class SelfEvidence:
    span_id: str
    service: str
    is_abnormal: bool
    key_symptoms: str = ""
    hypothesis: str = ""

    def __post_init__(self):
        object.__setattr__(self, "key_symptoms", cap(self.key_symptoms))
        object.__setattr__(self, "hypothesis", cap(self.hypothesis))

    def to_dict(self) -> dict[str, Any]:
        return {
            "span_id": self.span_id,
            "service_name": self.service,
            "is_abnormal": self.is_abnormal,
            "key_symptoms": self.key_symptoms,
            "hypothesis": self.hypothesis,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SelfEvidence":
        return cls(d["span_id"], d["service_name"], d["is_abnormal"], d.get("key_symptoms", ""), d.get("hypothesis", ""))


@dataclass(frozen=True)
class ConsolidatedEvidence:
    span_id: str
    service: str
    local_root_cause: str
    reason: str = ""
    confidence: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "reason", cap(self.reason))
        object.__setattr__(self, "confidence", clamp01(self.confidence))

    @property
    def blames_self(self) -> bool:
        return self.local_root_cause == SELF

    def to_dict(self) -> dict[str, Any]:
        return {
            "span_id": self.span_id,
            "service_name": self.service,
            "local_root_cause": self.local_root_cause,
            "reason": self.reason,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConsolidatedEvidence":
        return cls(d["span_id"], d["service_name"], d["local_root_cause"], d.get("reason", ""), d.get("confidence", 0.0))


class EvidenceGraphError(RCLError):
    pass


@dataclass(frozen=True)
class GlobalEvidenceGraph:
    """G_E = (V, E, Phi); ``order`` is the pre-order traversal with trace child order."""

    root: str
    order: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    phi: Mapping[str, SelfEvidence]

    def __post_init__(self):
        nodes = set(self.order)
        if len(nodes) != len(self.order):
            raise EvidenceGraphError("duplicate node in evidence graph order")
        if len(self.edges) != len(nodes) - 1:
            raise EvidenceGraphError(f"|E|={len(self.edges)} but |V|={len(nodes)}")
        if not self.order or self.order[0] != self.root:
            raise EvidenceGraphError("pre-order must start at the root")
        parents: dict[str, str] = {}
        for p, c in self.edges:
            if p not in nodes or c not in nodes:
                raise EvidenceGraphError(f"edge ({p}, {c}) leaves the node set")
            if c in parents:
                raise EvidenceGraphError(f"node {c} has two parents")
            parents[c] = p
        if self.root in parents or len(parents) != len(nodes) - 1:
            raise EvidenceGraphError("evidence graph is not a single-rooted tree")
        for v in self.order:
            if v not in self.phi:
                raise MissingEvidence(v)
        object.__setattr__(self, "phi", MappingProxyType(dict(self.phi)))

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(self.order)

    def __len__(self) -> int:
        return len(self.order)

    def children(self, span_id: str) -> list[str]:
        kids = {c for p, c in self.edges if p == span_id}
        return [v for v in self.order if v in kids]

    def parent_map(self) -> dict[str, str]:
        return {c: p for p, c in self.edges}

    def depths(self) -> dict[str, int]:
        parents = self.parent_map()
        depth = {self.root: 0}
        for v in self.order[1:]:
            depth[v] = depth[parents[v]] + 1
        return depth


def build_evidence_graph(graph: TraceGraph, evidences: Mapping[str, SelfEvidence]) -> GlobalEvidenceGraph:
    for sid in graph.nodes:
        if sid not in evidences:
            raise MissingEvidence(sid)
    return GlobalEvidenceGraph(
        root=graph.entry_span_id,
        order=tuple(graph.preorder()),
        edges=frozenset(graph.edges()),
        phi={sid: evidences[sid] for sid in graph.nodes},
    )


def abnormal_nodes(g: GlobalEvidenceGraph) -> list[tuple[str, SelfEvidence]]:
    return [(v, g.phi[v]) for v in g.order if g.phi[v].is_abnormal]


def to_document(g: GlobalEvidenceGraph) -> dict[str, Any]:
    return {
        "root": g.root,
        "nodes": [g.phi[v].to_dict() for v in sorted(g.order)],
        "edges": [list(e) for e in sorted(g.edges)],
        "order": list(g.order),
    }


def serialize(g: GlobalEvidenceGraph) -> str:
    return json.dumps(to_document(g), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def from_document(doc: Mapping[str, Any]) -> GlobalEvidenceGraph:
    phi = {n["span_id"]: SelfEvidence.from_dict(n) for n in doc["nodes"]}
    return GlobalEvidenceGraph(
        root=doc["root"],
        order=tuple(doc["order"]),
        edges=frozenset((p, c) for p, c in doc["edges"]),
        phi=phi,
    )


def deserialize(text: str) -> GlobalEvidenceGraph:
    return from_document(json.loads(text))

"""Core telemetry types and component identity across pod/service/node levels."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

from spanrca.errors import UnknownPod


@dataclass(frozen=True)
class Span:
    trace_id: str
    span_id: str
    parent_span_id: Optional[str]
    timestamp: int
    service: str
    cmdb_id: str
    operation: str
    duration: int
    status: str

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"span {self.span_id}: negative duration {self.duration}")
        if self.parent_span_id == "":
            object.__setattr__(self, "parent_span_id", None)


@dataclass(frozen=True)
class MetricPoint:
    timestamp: int
    component_id: str
    metric_name: str
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite metric value {self.value!r}")


class Severity(enum.IntEnum):
    TRACE = 0
    DEBUG = 1
    INFO = 2
    WARN = 3
    ERROR = 4
    FATAL = 5

    @classmethod
    def parse(cls, raw: str) -> Optional["Severity"]:
        """Map a severity string to the enum; None when unrecognised."""
        key = (raw or "").strip().upper()
        key = {"WARNING": "WARN", "CRITICAL": "FATAL", "ERR": "ERROR"}.get(key, key)
        try:
            return cls[key]
        except KeyError:
            return None


@dataclass(frozen=True)
class LogEntry:
    timestamp: int
    component_id: str
    severity: Severity
    message: str = ""


class Level(enum.IntEnum):
    # Order doubles as the ranking tie-break (finer level first).
    POD = 0
    SERVICE = 1
    NODE = 2


@dataclass(frozen=True, order=True)
class ComponentRef:
    level: Level
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("component name must be non-empty")
        if not isinstance(self.level, Level):
            object.__setattr__(self, "level", Level[str(self.level)])

    @classmethod
    def pod(cls, name: str) -> "ComponentRef":
        return cls(Level.POD, name)

    @classmethod
    def service(cls, name: str) -> "ComponentRef":
        return cls(Level.SERVICE, name)

    @classmethod
    def node(cls, name: str) -> "ComponentRef":
        return cls(Level.NODE, name)

    def __str__(self) -> str:
        return f"{self.level.name}:{self.name}"


@dataclass(frozen=True)
class PodPlacement:
    name: str
    service: str
    node: str


@dataclass(frozen=True)
class TopologyManifest:
    pods: tuple[PodPlacement, ...] = ()
    _by_name: Mapping[str, PodPlacement] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pods = tuple(self.pods)
        by_name: dict[str, PodPlacement] = {}
        for p in pods:
            if p.name in by_name:
                raise ValueError(f"duplicate pod {p.name!r} in manifest")
            by_name[p.name] = p
        object.__setattr__(self, "pods", pods)
        object.__setattr__(self, "_by_name", MappingProxyType(by_name))

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]]) -> "TopologyManifest":
        return cls(tuple(PodPlacement(*t) for t in triples))

    def __contains__(self, pod_name: str) -> bool:
        return pod_name in self._by_name

    def placement(self, pod_name: str) -> PodPlacement:
        try:
            return self._by_name[pod_name]
        except KeyError:
            raise UnknownPod(pod_name) from None

    def service_of(self, pod_name: str) -> str:
        return self.placement(pod_name).service

    def node_of(self, pod_name: str) -> str:
        return self.placement(pod_name).node

    def replicas(self, service: str) -> list[str]:
        return [p.name for p in self.pods if p.service == service]

    def pods_on(self, node: str) -> list[str]:
        return [p.name for p in self.pods if p.node == node]

    @property
    def services(self) -> set[str]:
        return {p.service for p in self.pods}

    @property
    def nodes(self) -> set[str]:
        return {p.node for p in self.pods}

    def lookup(self, name: str) -> Optional[ComponentRef]:
        """Resolve a bare component name, trying pod, then service, then node."""
        if name in self._by_name:
            return ComponentRef.pod(name)
        if name in self.services:
            return ComponentRef.service(name)
        if name in self.nodes:
            return ComponentRef.node(name)
        return None

    def exists(self, ref: ComponentRef) -> bool:
        if ref.level is Level.POD:
            return ref.name in self._by_name
        if ref.level is Level.SERVICE:
            return ref.name in self.services
        return ref.name in self.nodes


def resolve_levels(pod: ComponentRef, manifest: TopologyManifest) -> frozenset[ComponentRef]:
    """Lift a pod to {pod, its service, its hosting node}."""
    if pod.level is not Level.POD:
        raise ValueError(f"resolve_levels expects a POD, got {pod}")
    placement = manifest.placement(pod.name)
    return frozenset(
        {pod, ComponentRef.service(placement.service), ComponentRef.node(placement.node)}
    )

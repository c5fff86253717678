"""Relevance-filtered log retrieval for a component around a timestamp."""

from __future__ import annotations

from dataclasses import dataclass, field

from spanrca.ingest import LogStore
from spanrca.model import ComponentRef, Level, LogEntry, Severity, TopologyManifest

DEFAULT_KEYWORDS = ("error", "fail", "exception", "timeout", "refused", "unavailable", "panic")
DEFAULT_STATUS_PATTERNS = ("5xx", " 500", " 502", " 503", " 504")
DEFAULT_MAX_ENTRIES = 100


@dataclass(frozen=True)
class RelevanceRule:
    min_severity: Severity = Severity.WARN
    keyword_patterns: tuple[str, ...] = DEFAULT_KEYWORDS
    status_code_patterns: tuple[str, ...] = DEFAULT_STATUS_PATTERNS
    _lowered: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "keyword_patterns", tuple(self.keyword_patterns))
        object.__setattr__(self, "status_code_patterns", tuple(self.status_code_patterns))
        object.__setattr__(self, "_lowered", tuple(k.lower() for k in self.keyword_patterns))


@dataclass(frozen=True)
class LogQuery:
    entries: tuple[LogEntry, ...]
    truncated: bool = False
    matched: int = 0

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def relevance(entry: LogEntry, rule: RelevanceRule) -> bool:
    if entry.severity >= rule.min_severity:
        return True
    msg = entry.message.lower()
    if any(k in msg for k in rule._lowered):
        return True
    return any(p in entry.message for p in rule.status_code_patterns)


def log_components(component: ComponentRef, manifest: TopologyManifest) -> list[str]:
    """A pod's log scope covers every replica of its service."""
    if component.level is Level.POD and component.name in manifest:
        replicas = manifest.replicas(manifest.service_of(component.name))
        return [component.name] + [r for r in replicas if r != component.name]
    return [component.name]


def query_logs(
    store: LogStore,
    t0: int,
    delta: int,
    component: ComponentRef,
    manifest: TopologyManifest,
    rule: RelevanceRule = RelevanceRule(),
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> LogQuery:
    if delta <= 0:
        raise ValueError("delta must be positive")
    hits = [
        e
        for cid in log_components(component, manifest)
        for e in store.window(cid, t0 - delta, t0 + delta)
        if relevance(e, rule)
    ]
    hits.sort(key=lambda e: (e.timestamp, e.component_id))
    return LogQuery(tuple(hits[:max_entries]), truncated=len(hits) > max_entries, matched=len(hits))

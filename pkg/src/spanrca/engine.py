"""End-to-end diagnosis of one failed request: tools, agents, synthesis, report."""

from __future__ import annotations

import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from spanrca import evidence as ev
from spanrca.ingest import DatasetBundle
from spanrca.logs import DEFAULT_KEYWORDS, DEFAULT_MAX_ENTRIES, DEFAULT_STATUS_PATTERNS, RelevanceRule
from spanrca.metrics import BEFORE_WINDOW, DEFAULT_DELTA_MS, DEFAULT_N_SIGMA, REFERENCE_POLICIES
from spanrca.model import Severity
from spanrca.orchestrator import DEFAULT_POOL_CAPACITY, PoolConfig, PoolMonitor, RootReport, diagnose_trace
from spanrca.reasoner import LLM, ReasonerConfig, make_reasoner
from spanrca.synthesizer import DEFAULT_TOP_N, RankedDiagnosis, llm_synthesize, synthesize
from spanrca.tools import DataTools
from spanrca.traces import (
    FailureEpisode,
    TraceGraph,
    build_trace_graph,
    detect_failed_requests,
    group_by_trace,
    normal_entry_latency,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    n_sigma: float = DEFAULT_N_SIGMA
    delta_ms: int = DEFAULT_DELTA_MS
    reference_window_policy: str = BEFORE_WINDOW
    log_delta_ms: Optional[int] = None
    log_min_severity: str = "WARN"
    log_keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    log_status_patterns: tuple[str, ...] = DEFAULT_STATUS_PATTERNS
    log_max_entries: int = DEFAULT_MAX_ENTRIES
    pool_capacity: int = DEFAULT_POOL_CAPACITY
    top_n: int = DEFAULT_TOP_N
    per_span_t0: bool = False
    agent_timeout_ms: Optional[int] = None
    normal_latency_ms: Optional[float] = None
    llm_synthesis: bool = False
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)

    def __post_init__(self):
        if self.n_sigma <= 0:
            raise ValueError("n_sigma must be positive")
        if self.delta_ms <= 0:
            raise ValueError("delta_ms must be positive")
        if self.reference_window_policy not in REFERENCE_POLICIES:
            raise ValueError(f"reference_window_policy must be one of {REFERENCE_POLICIES}")
        if Severity.parse(self.log_min_severity) is None:
            raise ValueError(f"unknown log severity {self.log_min_severity!r}")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        PoolConfig(self.pool_capacity)

    def rule(self) -> RelevanceRule:
        return RelevanceRule(Severity.parse(self.log_min_severity), tuple(self.log_keywords), tuple(self.log_status_patterns))

    def reasoner_config(self) -> ReasonerConfig:
        r = self.reasoner
        return dataclasses.replace(
            r, n_sigma=self.n_sigma, max_concurrency=r.max_concurrency or self.pool_capacity
        )

    def echo(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["reasoner"].pop("api_key", None)
        return d


@dataclass
class DiagnosisReport:
    failure_id: Optional[str]
    trace_id: str
    root_report: RootReport
    ranked: RankedDiagnosis
    evidence_graph: ev.GlobalEvidenceGraph
    config: EngineConfig
    monitor: PoolMonitor
    seconds: float = 0.0

    def fallback_flags(self) -> dict[str, Any]:
        return {
            "synthesis_fallback": self.ranked.fallback,
            "synthesis_notes": list(self.ranked.notes),
            "failed_agents": [{"span_id": s, "cause": c} for s, c in self.monitor.failures],
            "tool_errors": [{"span_id": s, "error": e} for s, e in self.monitor.tool_errors],
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "failure_id": self.failure_id,
            "trace_id": self.trace_id,
            "root_report": self.root_report.to_dict(),
            "ranked": [c.to_dict() for c in self.ranked.candidates],
            "evidence_graph": ev.to_document(self.evidence_graph),
            "config_echo": self.config.echo(),
            "fallback_flags": self.fallback_flags(),
            "stats": {
                "spans": len(self.evidence_graph),
                "agents_high_water": self.monitor.high_water,
                "diagnosis_seconds": self.seconds,
            },
        }


def make_tools(bundle: DatasetBundle, cfg: EngineConfig) -> DataTools:
    return DataTools(
        bundle.metrics,
        bundle.logs,
        bundle.manifest,
        n_sigma=cfg.n_sigma,
        delta_ms=cfg.delta_ms,
        log_delta_ms=cfg.log_delta_ms,
        rule=cfg.rule(),
        log_max_entries=cfg.log_max_entries,
        reference_policy=cfg.reference_window_policy,
    )


def diagnose_graph(
    graph: TraceGraph,
    bundle: DatasetBundle,
    cfg: EngineConfig,
    *,
    failure_id: Optional[str] = None,
    tools=None,
) -> DiagnosisReport:
    started = time.perf_counter()
    rcfg = cfg.reasoner_config()
    reasoner = make_reasoner(rcfg)
    monitor = PoolMonitor()
    root, g = diagnose_trace(
        graph,
        tools or make_tools(bundle, cfg),
        reasoner,
        PoolConfig(cfg.pool_capacity),
        per_span_t0=cfg.per_span_t0,
        agent_timeout_ms=cfg.agent_timeout_ms,
        monitor=monitor,
    )
    if cfg.llm_synthesis and rcfg.backend == LLM:
        ranked = llm_synthesize(root, g, graph, bundle.manifest, cfg.top_n, reasoner)
    else:
        ranked = synthesize(root, g, graph, bundle.manifest, cfg.top_n)
    return DiagnosisReport(
        failure_id, graph.trace_id, root, ranked, g, cfg, monitor, time.perf_counter() - started
    )


def diagnose_case(
    bundle: DatasetBundle, trace_id: str, cfg: EngineConfig, *, failure_id: Optional[str] = None
) -> DiagnosisReport:
    graph = build_trace_graph(bundle.trace_spans(trace_id), trace_id)
    return diagnose_graph(graph, bundle, cfg, failure_id=failure_id)


def build_graphs(bundle: DatasetBundle) -> list[TraceGraph]:
    """Every well-formed trace in the bundle; malformed ones are logged and skipped."""
    graphs = []
    for tid, spans in group_by_trace(bundle.spans).items():
        try:
            graphs.append(build_trace_graph(spans, tid))
        except Exception as exc:
            log.warning("skipping trace %s: %s", tid, exc)
    return graphs


def detect_episodes(bundle: DatasetBundle, cfg: EngineConfig) -> list[FailureEpisode]:
    graphs = build_graphs(bundle)
    mu = cfg.normal_latency_ms
    if mu is None:
        if bundle.ground_truth:
            failing = {c.entry_trace_id for c in bundle.ground_truth}
            mu = normal_entry_latency(graphs, exclude=failing)
        elif graphs:
            # unlabeled data: a single slow outlier must not inflate its own baseline
            mu = float(statistics.median(g.entry.duration for g in graphs))
        else:
            mu = normal_entry_latency(graphs)
    return detect_failed_requests(graphs, mu)

"""Recursive multi-agent diagnosis over a trace graph under a bounded agents pool.

Every span gets one agent. Agents are scheduled bottom-up: an agent becomes
READY once all of its children are DONE, and at most ``K`` agents are ACTIVE at
any moment. Ready agents wait in a FIFO queue (ties by span_id).
"""

from __future__ import annotations

import enum
import logging
import threading
import time
from collections import deque
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Optional, Sequence

from spanrca.errors import AgentFailed, PoolMisconfigured, ToolError
from spanrca.evidence import (
    SELF,
    ConsolidatedEvidence,
    GlobalEvidenceGraph,
    SelfEvidence,
    build_evidence_graph,
)
from spanrca.logs import LogQuery
from spanrca.reasoner import Reasoner, span_context
from spanrca.traces import TraceGraph, dominant_child_share

log = logging.getLogger(__name__)

DEFAULT_POOL_CAPACITY = 100

__all__ = [
    "AgentTask",
    "PoolConfig",
    "PoolMonitor",
    "RootReport",
    "TaskState",
    "build_evidence_graph",
    "diagnose_trace",
    "run_agent",
]


class TaskState(enum.Enum):
    PENDING = "PENDING"
    READY = "READY"
    ACTIVE = "ACTIVE"
    DONE = "DONE"
    FAILED = "FAILED"


@dataclass(frozen=True)
class PoolConfig:
    capacity: int = DEFAULT_POOL_CAPACITY

    def __post_init__(self):
        if isinstance(self.capacity, bool) or not isinstance(self.capacity, int) or self.capacity < 1:
            raise PoolMisconfigured(f"pool capacity must be an integer >= 1, got {self.capacity!r}")


@dataclass
class AgentTask:
    span_id: str
    state: TaskState = TaskState.PENDING
    result: Optional[tuple[SelfEvidence, ConsolidatedEvidence]] = None
    error: Optional[str] = None
    ready_seq: Optional[int] = None
    started: Optional[int] = None   # monotonic ns
    finished: Optional[int] = None  # monotonic ns


@dataclass(frozen=True)
class RootReport:
    evidence: ConsolidatedEvidence
    entry_pod: str

    @property
    def root_cause_name(self) -> str:
        """The blamed component's name with 'self' resolved to the entry pod."""
        rc = self.evidence.local_root_cause
        return self.entry_pod if rc == SELF else rc

    def to_dict(self) -> dict:
        return {**self.evidence.to_dict(), "resolved_root_cause": self.root_cause_name}


@dataclass
class PoolMonitor:
    """Instrumentation for one run: active gauge with high-water mark, task table, errors."""

    active: int = 0
    high_water: int = 0
    tasks: dict[str, AgentTask] = field(default_factory=dict)
    tool_errors: list[tuple[str, str]] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def enter(self) -> None:
        with self._lock:
            self.active += 1
            self.high_water = max(self.high_water, self.active)

    def exit(self) -> None:
        with self._lock:
            self.active -= 1

    def tool_error(self, span_id: str, exc: BaseException) -> None:
        with self._lock:
            self.tool_errors.append((span_id, f"{type(exc).__name__}: {exc}"))


def _query(fn, span_id: str, monitor: Optional[PoolMonitor], empty):
    try:
        return fn()
    except Exception as exc:  # tool failures degrade to empty results
        err = ToolError(f"{type(exc).__name__}: {exc}")
        log.warning("tool failure on span %s: %s", span_id, err)
        if monitor is not None:
            monitor.tool_error(span_id, exc)
        return empty


def run_agent(
    span_id: str,
    graph: TraceGraph,
    tools,
    reasoner: Reasoner,
    downstream: Sequence[ConsolidatedEvidence],
    t0: int,
    monitor: Optional[PoolMonitor] = None,
) -> tuple[SelfEvidence, ConsolidatedEvidence]:
    """Self-state verification followed by evidence consolidation for one span."""
    ctx = span_context(graph, span_id)
    pod = ctx.span.cmdb_id
    anomalies = _query(lambda: tools.metric_anomalies(pod, t0), span_id, monitor, [])
    logs = _query(lambda: tools.relevant_logs(pod, t0), span_id, monitor, LogQuery(()))
    e_s = reasoner.self_state(ctx, anomalies, logs)
    e_hat = reasoner.consolidate(e_s, list(downstream), dominant_child_share(graph, span_id))
    return e_s, e_hat


def _for_parent(e: ConsolidatedEvidence, graph: TraceGraph) -> ConsolidatedEvidence:
    """A child's 'self' is made concrete (its pod) before it is handed upwards."""
    if e.local_root_cause != SELF:
        return e
    pod = graph.nodes[e.span_id].cmdb_id
    return ConsolidatedEvidence(e.span_id, e.service, pod, e.reason, e.confidence)


def _failed_evidence(span, cause: str) -> tuple[SelfEvidence, ConsolidatedEvidence]:
    return (
        SelfEvidence(span.span_id, span.service, False, "agent failed", cause),
        ConsolidatedEvidence(span.span_id, span.service, SELF, f"agent failed: {cause}", 0.0),
    )


def diagnose_trace(
    graph: TraceGraph,
    tools,
    reasoner: Reasoner,
    pool: PoolConfig = PoolConfig(),
    t0: Optional[int] = None,
    *,
    per_span_t0: bool = False,
    agent_timeout_ms: Optional[int] = None,
    monitor: Optional[PoolMonitor] = None,
) -> tuple[RootReport, GlobalEvidenceGraph]:
    if not isinstance(pool, PoolConfig):
        raise PoolMisconfigured(f"expected PoolConfig, got {type(pool).__name__}")
    monitor = monitor if monitor is not None else PoolMonitor()
    base_t0 = graph.entry.timestamp if t0 is None else t0
    capacity = pool.capacity

    tasks = {sid: AgentTask(sid) for sid in graph.nodes}
    monitor.tasks = tasks
    waiting = {sid: len(graph.children_of[sid]) for sid in graph.nodes}
    seq = 0
    ready: deque[str] = deque()

    def make_ready(ids):
        nonlocal seq
        for sid in sorted(ids):
            tasks[sid].state = TaskState.READY
            tasks[sid].ready_seq = seq
            seq += 1
            ready.append(sid)

    def body(sid: str, downstream: list[ConsolidatedEvidence]):
        task = tasks[sid]
        monitor.enter()
        task.started = time.monotonic_ns()
        try:
            agent_t0 = graph.nodes[sid].timestamp if per_span_t0 else base_t0
            return run_agent(sid, graph, tools, reasoner, downstream, agent_t0, monitor)
        finally:
            task.finished = time.monotonic_ns()
            monitor.exit()

    make_ready(sid for sid, n in waiting.items() if n == 0)
    running: dict[Future, str] = {}
    deadlines: dict[Future, float] = {}
    resolved = 0
    timeout_s = agent_timeout_ms / 1000.0 if agent_timeout_ms else None

    def settle(sid: str, result=None, error: Optional[str] = None):
        nonlocal resolved
        task = tasks[sid]
        if task.state in (TaskState.DONE, TaskState.FAILED):
            return
        if error is None:
            task.state, task.result = TaskState.DONE, result
        else:
            task.state, task.error = TaskState.FAILED, error
            task.result = _failed_evidence(graph.nodes[sid], error)
            monitor.failures.append((sid, error))
            if sid == graph.entry_span_id:
                raise AgentFailed(sid, error)
            log.warning("agent %s failed: %s", sid, error)
        resolved += 1
        parent = graph.nodes[sid].parent_span_id
        if parent is not None:
            waiting[parent] -= 1
            if waiting[parent] == 0:
                newly.append(parent)

    ex = ThreadPoolExecutor(max_workers=min(capacity, len(graph.nodes)), thread_name_prefix="agent")
    abandoned = False
    try:
        while resolved < len(tasks):
            while ready and len(running) < capacity:
                sid = ready.popleft()
                downstream = [_for_parent(tasks[c].result[1], graph) for c in graph.children_of[sid]]
                tasks[sid].state = TaskState.ACTIVE
                fut = ex.submit(body, sid, downstream)
                running[fut] = sid
                if timeout_s:
                    deadlines[fut] = time.monotonic() + timeout_s
            wait_for = None
            if deadlines:
                wait_for = max(0.0, min(deadlines.values()) - time.monotonic())
            done, _ = wait(list(running), timeout=wait_for, return_when=FIRST_COMPLETED)
            newly: list[str] = []
            for fut in done:
                sid = running.pop(fut)
                deadlines.pop(fut, None)
                exc = fut.exception()
                if exc is None:
                    settle(sid, fut.result())
                else:
                    settle(sid, error=f"{type(exc).__name__}: {exc}")
            now = time.monotonic()
            for fut, deadline in list(deadlines.items()):
                if deadline <= now:
                    # the thread keeps its slot until it returns; only its result is discarded
                    del deadlines[fut]
                    abandoned = True
                    settle(running[fut], error=f"timed out after {agent_timeout_ms} ms")
            make_ready(newly)
    finally:
        # a timed-out agent's thread is left to finish on its own
        ex.shutdown(wait=not abandoned, cancel_futures=True)

    root_task = tasks[graph.entry_span_id]
    evidences = {sid: t.result[0] for sid, t in tasks.items()}
    report = RootReport(root_task.result[1], graph.entry.cmdb_id)
    return report, build_evidence_graph(graph, evidences)

"""Prompt templates for self-state verification and evidence consolidation.

Prompts are plain text with a ``[system]`` block followed by a ``[user]`` block;
:func:`to_messages` splits them into chat messages for the transport.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from spanrca.evidence import ConsolidatedEvidence, SelfEvidence
from spanrca.logs import LogQuery
from spanrca.metrics import MetricAnomaly
from spanrca.model import Span
from spanrca.traces import ChildRecord, TraceGraph, children

SYSTEM_MARK = "[system]\n"
USER_MARK = "\n[user]\n"

SYSTEM_INSTRUCTION = (
    "You are a Root Cause Localization agent in a microservice system. "
    "A user-reported failure has occurred. Your task is to analyze logs and metrics "
    "to identify the DEEPEST ROOT CAUSE SERVICE that initiated the failure chain."
)

SELF_STATE_SCHEMA = (
    '{"span_id": "...", "service_name": "...", "is_abnormal": true/false, '
    '"key_symptoms": "brief string", "hypothesis": "why it might be faulty or not"}'
)
CONSOLIDATION_SCHEMA = (
    '{"span_id": "...", "service_name": "...", "local_root_cause": "service name or \'self\'", '
    '"reason": "...", "confidence": 0.0-1.0}'
)

MAX_METRICS_LISTED = 10
MAX_TRAJECTORY_POINTS = 13
MAX_LOGS_LISTED = 20
MAX_LOG_CHARS = 200


@dataclass(frozen=True)
class SpanContext:
    """The span's own attributes plus a summary of its direct children."""

    span: Span
    children: tuple[ChildRecord, ...] = ()

    def attributes(self) -> dict:
        s = self.span
        return {
            "span_id": s.span_id,
            "trace_id": s.trace_id,
            "service": s.service,
            "pod": s.cmdb_id,
            "operation": s.operation,
            "timestamp": s.timestamp,
            "duration_ms": s.duration,
            "status": s.status,
            "children": [
                {
                    "span_id": c.span_id,
                    "service": c.service,
                    "operation": c.operation,
                    "timestamp": c.timestamp,
                    "duration_ms": c.duration,
                    "status": c.status,
                }
                for c in self.children
            ],
        }


def span_context(graph: TraceGraph, span_id: str) -> SpanContext:
    return SpanContext(graph.span(span_id), tuple(children(graph, span_id)))


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def _fmt_sigma(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.2f}"


def summarize_metrics(anomalies: Sequence[MetricAnomaly], limit: int = MAX_METRICS_LISTED) -> str:
    if not anomalies:
        return "no anomalous metrics in the local window"
    ranked = sorted(anomalies, key=lambda a: (-a.max_deviation_sigmas, a.metric_key))
    lines = []
    for a in ranked[:limit]:
        traj = a.trajectory[-MAX_TRAJECTORY_POINTS:]
        lines.append(
            f"- {a.component_id}/{a.metric_name}: max deviation {_fmt_sigma(a.max_deviation_sigmas)} sigma "
            f"(baseline mean {a.baseline.mean:.4g}, std {a.baseline.std:.4g}); "
            f"trajectory {[round(v, 4) for _, v in traj]}"
        )
    if len(ranked) > limit:
        lines.append(f"- ... {len(ranked) - limit} more anomalous metrics omitted")
    return "\n".join(lines)


def summarize_logs(query: LogQuery | Sequence, limit: int = MAX_LOGS_LISTED) -> str:
    entries = list(query)
    if not entries:
        return "no relevant logs in the local window"
    lines = [
        f"- [{e.severity.name}] {e.component_id} @{e.timestamp}: {e.message[:MAX_LOG_CHARS]}"
        for e in entries[:limit]
    ]
    total = getattr(query, "matched", len(entries)) or len(entries)
    if total > limit:
        lines.append(f"- ... {total - limit} more relevant log lines omitted")
    return "\n".join(lines)


def render_self_state_prompt(ctx: SpanContext, metric_summary: str, log_summary: str) -> str:
    user = (
        f"Analyze the following span for root cause: {_dumps(ctx.attributes())},\n"
        "You have the following data tools to call: {log_tool, metric_tool}. "
        "Both tools were already executed for this span's pod over the diagnostic window; "
        "their results are:\n"
        f"log_tool:\n{log_summary}\n"
        f"metric_tool:\n{metric_summary}\n"
        f"Summarize self-state evidence as JSON:\n{SELF_STATE_SCHEMA}"
    )
    return SYSTEM_MARK + SYSTEM_INSTRUCTION + USER_MARK + user


def render_consolidation_prompt(e_s: SelfEvidence, downstream: Sequence[ConsolidatedEvidence]) -> str:
    if downstream:
        below = "\n".join(_dumps(d.to_dict()) for d in downstream)
    else:
        below = "none (this span has no child agents)"
    user = (
        f"Downstream evidences from children:\n{below}\n"
        f"Your own self-evidence: {_dumps(e_s.to_dict())}\n"
        "Task: Synthesize these evidences into a locally consolidated root cause hypothesis "
        "to be propagated to your parent agent.\n"
        f"Output format (JSON only):\n{CONSOLIDATION_SCHEMA}"
    )
    return SYSTEM_MARK + SYSTEM_INSTRUCTION + USER_MARK + user


def to_messages(prompt: str) -> list[dict[str, str]]:
    if prompt.startswith(SYSTEM_MARK) and USER_MARK in prompt:
        system, user = prompt[len(SYSTEM_MARK):].split(USER_MARK, 1)
        return [{"role": "system", "content": system}, {"role": "user", "content": user}]
    return [{"role": "user", "content": prompt}]

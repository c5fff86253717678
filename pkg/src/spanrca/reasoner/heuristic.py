"""Deterministic rule-table stand-ins for the self-state and consolidation steps."""

from __future__ import annotations

from typing import Optional, Sequence

from spanrca.evidence import SELF, ConsolidatedEvidence, SelfEvidence
from spanrca.metrics import DEFAULT_N_SIGMA, MetricAnomaly
from spanrca.model import LogEntry, Severity
from spanrca.reasoner.prompts import SpanContext, _fmt_sigma

OK_STATUS_WORDS = {"", "0", "OK", "UNSET", "STATUS_CODE_OK", "STATUS_CODE_UNSET", "SUCCESS"}
ERROR_STATUS_WORDS = {"ERROR", "STATUS_CODE_ERROR", "FAIL", "FAILED", "TIMEOUT"}
# gRPC codes that indicate a server-side problem
GRPC_ERROR_CODES = {2, 4, 8, 10, 13, 14, 15}
PROPAGATED_SEP = " | origin: "


def is_error_status(status: str) -> bool:
    raw = (status or "").strip().upper()
    if raw in OK_STATUS_WORDS:
        return False
    if raw in ERROR_STATUS_WORDS:
        return True
    try:
        code = int(raw)
    except ValueError:
        return False
    if code >= 100:
        return code >= 500
    return code in GRPC_ERROR_CODES


def heuristic_self_state(
    ctx: SpanContext,
    metric_anoms: Sequence[MetricAnomaly],
    logs: Sequence[LogEntry],
    *,
    n_sigma: float = DEFAULT_N_SIGMA,
    min_error_logs: int = 1,
) -> SelfEvidence:
    span = ctx.span
    hot = sorted(
        (a for a in metric_anoms if a.max_deviation_sigmas >= n_sigma),
        key=lambda a: (-a.max_deviation_sigmas, a.metric_key),
    )
    errors = [e for e in logs if e.severity >= Severity.ERROR]
    bad_status = is_error_status(span.status)

    symptoms = []
    if hot:
        symptoms.append(
            "metrics beyond {:g} sigma: ".format(n_sigma)
            + ", ".join(f"{a.component_id}/{a.metric_name} ({_fmt_sigma(a.max_deviation_sigmas)} sigma)" for a in hot[:5])
        )
    if len(errors) >= min_error_logs and errors:
        symptoms.append(f"{len(errors)} ERROR+ log lines, e.g. '{errors[0].message[:80]}'")
    if bad_status:
        symptoms.append(f"span status {span.status}")

    abnormal = bool(hot) or (len(errors) >= min_error_logs and bool(errors)) or bad_status
    if not abnormal:
        return SelfEvidence(
            span.span_id,
            span.service,
            False,
            "no metric deviation, no error logs, status ok",
            f"{span.cmdb_id} looks healthy in the diagnostic window",
        )
    if hot:
        top = hot[0]
        strongest = f"metric {top.component_id}/{top.metric_name} at {_fmt_sigma(top.max_deviation_sigmas)} sigma"
    elif errors and len(errors) >= min_error_logs:
        strongest = f"{len(errors)} error log lines"
    else:
        strongest = f"error status {span.status}"
    return SelfEvidence(
        span.span_id,
        span.service,
        True,
        "; ".join(symptoms),
        f"{span.cmdb_id} is intrinsically abnormal; strongest signal: {strongest}",
    )


def heuristic_consolidate(
    e_s: SelfEvidence,
    downstream: Sequence[ConsolidatedEvidence],
    child_share: Optional[tuple[str, float]] = None,
    *,
    child_threshold: float = 0.6,
    decay: float = 0.95,
    self_confidence: float = 0.8,
    boosted_confidence: float = 0.9,
    unexplained_share: float = 0.5,
) -> ConsolidatedEvidence:
    best: Optional[ConsolidatedEvidence] = None
    for d in downstream:  # strict '>' keeps the earliest child on ties
        if best is None or d.confidence > best.confidence:
            best = d

    if best is not None and best.confidence >= child_threshold:
        # a bare 'self' from a child means the child's own service
        target = best.service if best.blames_self else best.local_root_cause
        # keep only the originating explanation so reasons do not grow with depth
        origin = best.reason.split(PROPAGATED_SEP, 1)[-1] if best.reason.startswith("via ") else best.reason
        return ConsolidatedEvidence(
            e_s.span_id,
            e_s.service,
            target,
            f"via {best.service} (confidence {best.confidence:.3f}) blaming {target}{PROPAGATED_SEP}{origin}",
            best.confidence * decay,
        )
    if e_s.is_abnormal:
        explained = child_share is not None and child_share[1] >= unexplained_share
        conf = self_confidence if explained else boosted_confidence
        note = "latency largely spent in a child call" if explained else "latency not explained by children"
        return ConsolidatedEvidence(e_s.span_id, e_s.service, SELF, f"{e_s.hypothesis}; {note}", conf)
    return ConsolidatedEvidence(e_s.span_id, e_s.service, SELF, "no anomaly observed", 0.0)

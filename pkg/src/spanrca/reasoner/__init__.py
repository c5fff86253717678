"""Per-span reasoning backends: a deterministic rule table and an LLM client."""

from __future__ import annotations

from typing import Optional, Protocol, Sequence

from spanrca.errors import SchemaError
from spanrca.evidence import SELF, ConsolidatedEvidence, SelfEvidence
from spanrca.logs import LogQuery
from spanrca.metrics import MetricAnomaly
from spanrca.reasoner.config import HEURISTIC, LLM, ReasonerConfig
from spanrca.reasoner.heuristic import heuristic_consolidate, heuristic_self_state, is_error_status
from spanrca.reasoner.llm import complete
from spanrca.reasoner.parsing import extract_json, parse_consolidated_evidence, parse_self_evidence
from spanrca.reasoner.prompts import (
    SpanContext,
    render_consolidation_prompt,
    render_self_state_prompt,
    span_context,
    summarize_logs,
    summarize_metrics,
)

__all__ = [
    "HEURISTIC",
    "LLM",
    "HeuristicReasoner",
    "LLMReasoner",
    "Reasoner",
    "ReasonerConfig",
    "SpanContext",
    "complete",
    "extract_json",
    "heuristic_consolidate",
    "heuristic_self_state",
    "is_error_status",
    "make_reasoner",
    "parse_consolidated_evidence",
    "parse_self_evidence",
    "render_consolidation_prompt",
    "render_self_state_prompt",
    "span_context",
    "summarize_logs",
    "summarize_metrics",
]


class Reasoner(Protocol):
    def self_state(
        self, ctx: SpanContext, anomalies: Sequence[MetricAnomaly], logs: LogQuery | Sequence
    ) -> SelfEvidence: ...

    def consolidate(
        self,
        e_s: SelfEvidence,
        downstream: Sequence[ConsolidatedEvidence],
        child_share: Optional[tuple[str, float]] = None,
    ) -> ConsolidatedEvidence: ...


class HeuristicReasoner:
    def __init__(self, cfg: ReasonerConfig = ReasonerConfig()):
        self.cfg = cfg

    def self_state(self, ctx, anomalies, logs) -> SelfEvidence:
        return heuristic_self_state(
            ctx, anomalies, list(logs), n_sigma=self.cfg.n_sigma, min_error_logs=self.cfg.min_error_logs
        )

    def consolidate(self, e_s, downstream, child_share=None) -> ConsolidatedEvidence:
        c = self.cfg
        return heuristic_consolidate(
            e_s,
            downstream,
            child_share,
            child_threshold=c.child_threshold,
            decay=c.decay,
            self_confidence=c.self_confidence,
            boosted_confidence=c.boosted_confidence,
            unexplained_share=c.unexplained_share,
        )


REPAIR_NOTE = (
    "\n\nYour previous reply could not be used ({error}). "
    "Reply with the JSON object only, exactly in the requested format."
)


class LLMReasoner:
    """Renders the prompts, calls the chat endpoint and validates the JSON replies.

    A reply that fails validation triggers exactly one re-prompt.
    """

    def __init__(self, cfg: ReasonerConfig):
        self.cfg = cfg

    def _ask(self, prompt: str, parse):
        reply = complete(prompt, self.cfg)
        try:
            return parse(reply)
        except SchemaError as exc:
            return parse(complete(prompt + REPAIR_NOTE.format(error=exc), self.cfg))

    def self_state(self, ctx, anomalies, logs) -> SelfEvidence:
        prompt = render_self_state_prompt(ctx, summarize_metrics(anomalies), summarize_logs(logs))
        e = self._ask(prompt, parse_self_evidence)
        return SelfEvidence(ctx.span.span_id, ctx.span.service, e.is_abnormal, e.key_symptoms, e.hypothesis)

    def consolidate(self, e_s, downstream, child_share=None) -> ConsolidatedEvidence:
        e = self._ask(render_consolidation_prompt(e_s, downstream), parse_consolidated_evidence)
        allowed = {d.local_root_cause for d in downstream} | {d.service for d in downstream}
        target = e.local_root_cause
        reason = e.reason
        if target in (e_s.service, "", SELF.upper()):
            target = SELF
        elif target != SELF and target not in allowed:
            reason = f"{reason} [unrecognised target {target!r} replaced by self]"
            target = SELF
        return ConsolidatedEvidence(e_s.span_id, e_s.service, target, reason, e.confidence)


def make_reasoner(cfg: ReasonerConfig) -> Reasoner:
    if cfg.backend == LLM:
        return LLMReasoner(cfg.with_env())
    return HeuristicReasoner(cfg)

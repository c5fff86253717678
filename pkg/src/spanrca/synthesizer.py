"""Fusion of the root-level report and the global evidence graph into a ranked list."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

from spanrca.errors import RCLError
from spanrca.evidence import GlobalEvidenceGraph, abnormal_nodes, clamp01
from spanrca.model import ComponentRef, Level, TopologyManifest, resolve_levels
from spanrca.orchestrator import RootReport
from spanrca.traces import TraceGraph

log = logging.getLogger(__name__)

DEFAULT_TOP_N = 10


@dataclass(frozen=True)
class ScoreWeights:
    root_match: float = 0.5
    support: float = 0.35
    depth: float = 0.15

    def scaled(self, factor: float) -> "ScoreWeights":
        return ScoreWeights(self.root_match * factor, self.support * factor, self.depth * factor)


@dataclass(frozen=True)
class RankedCandidate:
    component: ComponentRef
    score: float
    rationale: str = ""
    supporting_span_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "level": self.component.level.name,
            "name": self.component.name,
            "score": self.score,
            "rationale": self.rationale,
            "supporting_spans": list(self.supporting_span_ids),
        }


@dataclass(frozen=True)
class RankedDiagnosis:
    candidates: tuple[RankedCandidate, ...] = ()
    fallback: bool = False
    notes: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def components(self) -> list[ComponentRef]:
        return [c.component for c in self.candidates]


def _sort_key(c: RankedCandidate):
    return (-c.score, c.component.level, c.component.name)


def _pods_in(graph: TraceGraph, span_ids: Iterable[str]) -> list[str]:
    return [graph.nodes[s].cmdb_id for s in span_ids]


def expand_candidates(g: GlobalEvidenceGraph, spans: TraceGraph, manifest: TopologyManifest) -> set[ComponentRef]:
    abnormal = [sid for sid, _ in abnormal_nodes(g)]
    source = abnormal if abnormal else list(g.order)
    out: set[ComponentRef] = set()
    for pod in _pods_in(spans, source):
        out |= resolve_levels(ComponentRef.pod(pod), manifest)
    return out


def _root_target(root: RootReport, manifest: TopologyManifest) -> Optional[ComponentRef]:
    return manifest.lookup(root.root_cause_name)


def _matches(c: ComponentRef, target: Optional[ComponentRef], manifest: TopologyManifest) -> bool:
    """Level-lifted equality: a pod matches its own service and node, and vice versa."""
    if target is None:
        return False
    if c == target:
        return True
    if target.level is Level.POD and target.name in manifest:
        return c in resolve_levels(target, manifest)
    if c.level is Level.POD and c.name in manifest:
        return target in resolve_levels(c, manifest)
    return False


class _Context:
    """Per-synthesis precomputation shared by every candidate's score."""

    def __init__(self, root: RootReport, g: GlobalEvidenceGraph, spans: TraceGraph, manifest: TopologyManifest):
        self.root = root
        self.g = g
        self.manifest = manifest
        self.target = _root_target(root, manifest)
        self.abnormal = [sid for sid, _ in abnormal_nodes(g)]
        abnormal_set = set(self.abnormal)
        self.depth = g.depths()
        parents = g.parent_map()
        # abnormal nodes that have an abnormal descendant
        self.has_abnormal_below: set[str] = set()
        for sid in self.abnormal:
            p = parents.get(sid)
            while p is not None:
                self.has_abnormal_below.add(p)
                p = parents.get(p)
        self.has_abnormal_below &= abnormal_set
        self.levels: dict[str, frozenset[ComponentRef]] = {}
        for sid in self.abnormal:
            pod = spans.nodes[sid].cmdb_id
            self.levels[sid] = resolve_levels(ComponentRef.pod(pod), manifest)

    def supporting(self, c: ComponentRef) -> list[str]:
        return [sid for sid in self.abnormal if c in self.levels[sid]]


def _score(c: ComponentRef, ctx: _Context, w: ScoreWeights) -> tuple[float, str, tuple[str, ...]]:
    support = ctx.supporting(c)
    match = _matches(c, ctx.target, ctx.manifest)
    conf = ctx.root.evidence.confidence
    root_term = conf if match else 0.0
    support_term = len(support) / len(ctx.abnormal) if ctx.abnormal else 0.0
    depth_term = 0.0
    if support:
        # deepest supporting node; pre-order breaks depth ties
        deepest = max(support, key=lambda s: (ctx.depth[s], -ctx.g.order.index(s)))
        depth_term = 0.0 if deepest in ctx.has_abnormal_below else 1.0
    score = clamp01(w.root_match * root_term + w.support * support_term + w.depth * depth_term)

    parts = []
    if match:
        parts.append(
            f"root-level report blames {ctx.root.root_cause_name} (confidence {conf:.2f}): {ctx.root.evidence.reason}"
        )
    if support:
        parts.append(
            f"{len(support)}/{len(ctx.abnormal)} abnormal spans resolve here ({', '.join(support[:8])})"
            + ("; deepest one has no abnormal descendants" if depth_term else "")
        )
    if not parts:
        parts.append("no abnormal evidence resolves to this component")
    return score, " | ".join(parts), tuple(support)


def score_candidate(
    c: ComponentRef,
    root: RootReport,
    g: GlobalEvidenceGraph,
    spans: TraceGraph,
    manifest: TopologyManifest,
    weights: ScoreWeights = ScoreWeights(),
) -> tuple[float, str, tuple[str, ...]]:
    return _score(c, _Context(root, g, spans, manifest), weights)


def synthesize(
    root: RootReport,
    g: GlobalEvidenceGraph,
    spans: TraceGraph,
    manifest: TopologyManifest,
    top_n: int = DEFAULT_TOP_N,
    weights: ScoreWeights = ScoreWeights(),
) -> RankedDiagnosis:
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    ctx = _Context(root, g, spans, manifest)
    ranked = []
    for c in expand_candidates(g, spans, manifest):
        score, why, support = _score(c, ctx, weights)
        ranked.append(RankedCandidate(c, score, why, support))
    ranked.sort(key=_sort_key)
    return RankedDiagnosis(tuple(ranked[:top_n]))


# -- optional LLM synthesis ---------------------------------------------------

SYNTH_MAX_NODES = 40

SYNTH_INSTRUCTION = (
    "You are the diagnosis synthesizer of a root cause localization system for microservices. "
    "Combine the root-level diagnosis report (the recursively consolidated conclusion) with the "
    "global evidence graph (every span agent's self-state evidence) and rank the candidate "
    "components from most to least likely root cause."
)


def render_synthesis_prompt(
    root: RootReport, g: GlobalEvidenceGraph, candidates: Iterable[ComponentRef], max_nodes: int = SYNTH_MAX_NODES
) -> str:
    from spanrca.reasoner.prompts import SYSTEM_MARK, USER_MARK

    abnormal = [sid for sid, _ in abnormal_nodes(g)]
    rest = [v for v in g.order if v not in set(abnormal)]
    listed = (abnormal + rest)[:max_nodes]
    parents = g.parent_map()
    nodes = [{**g.phi[v].to_dict(), "parent": parents.get(v)} for v in listed]
    omitted = len(g.order) - len(listed)
    cands = [{"level": c.level.name, "name": c.name} for c in sorted(candidates)]
    user = (
        f"Root-level diagnosis report: {json.dumps(root.to_dict(), ensure_ascii=False)}\n"
        f"Global evidence graph ({len(g.order)} spans, abnormal first"
        + (f", {omitted} normal spans omitted" if omitted else "")
        + f"):\n{json.dumps(nodes, ensure_ascii=False)}\n"
        f"Candidate components: {json.dumps(cands)}\n"
        "Output format (JSON only): an ordered list, most likely first, of "
        '[{"level": "POD|SERVICE|NODE", "name": "...", "score": 0.0-1.0, "rationale": "..."}]. '
        "Only use candidates from the list above."
    )
    return SYSTEM_MARK + SYNTH_INSTRUCTION + USER_MARK + user


def parse_ranking(text: str, allowed: set[ComponentRef]) -> tuple[list[RankedCandidate], int]:
    """Validated ranking from a model reply, and the number of entries dropped."""
    from spanrca.errors import SchemaError
    from spanrca.reasoner.parsing import extract_json

    items = extract_json(text, list)
    out: list[RankedCandidate] = []
    seen: set[ComponentRef] = set()
    dropped = 0
    prev = 1.0
    for pos, item in enumerate(items):
        try:
            comp = ComponentRef(Level[str(item["level"]).upper()], str(item["name"]))
        except (KeyError, TypeError, ValueError):
            dropped += 1
            continue
        if comp not in allowed or comp in seen:
            dropped += 1
            continue
        raw = item.get("score")
        try:
            score = clamp01(float(raw)) if raw is not None and not isinstance(raw, bool) else 1.0 / (len(out) + 1)
        except (TypeError, ValueError):
            score = 1.0 / (len(out) + 1)
        score = min(prev, score)  # keep the list non-increasing
        prev = score
        seen.add(comp)
        out.append(RankedCandidate(comp, score, str(item.get("rationale", ""))[:500]))
    if not out:
        raise SchemaError("ranking contained no usable candidates")
    return out, dropped


def llm_synthesize(
    root: RootReport,
    g: GlobalEvidenceGraph,
    spans: TraceGraph,
    manifest: TopologyManifest,
    top_n: int,
    reasoner,
    weights: ScoreWeights = ScoreWeights(),
) -> RankedDiagnosis:
    """Ask the LLM backend for the ranking; any failure falls back to :func:`synthesize`."""
    from spanrca.reasoner.llm import complete

    allowed = expand_candidates(g, spans, manifest)
    try:
        reply = complete(render_synthesis_prompt(root, g, allowed), reasoner.cfg)
        ranked, dropped = parse_ranking(reply, allowed)
    except RCLError as exc:
        log.warning("LLM synthesis failed (%s); using deterministic synthesis", exc)
        base = synthesize(root, g, spans, manifest, top_n, weights)
        return RankedDiagnosis(base.candidates, fallback=True, notes=(f"llm synthesis failed: {exc}",))
    notes = (f"dropped {dropped} unknown or duplicate entries",) if dropped else ()
    return RankedDiagnosis(tuple(ranked[:top_n]), fallback=False, notes=notes)

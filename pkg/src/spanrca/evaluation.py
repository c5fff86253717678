"""Ranking metrics (Recall@k, MRR) and the benchmark harness."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from spanrca.errors import EmptyOutcomeSet, IngestError
from spanrca.model import ComponentRef, Level, TopologyManifest

log = logging.getLogger(__name__)

RANK_CUTOFF = 10
RECALL_KS = (1, 3, 5, 10)


@dataclass(frozen=True)
class RankOutcome:
    failure_id: str
    rank: Optional[int]  # None: not in the top-10 (treated as rank infinity)
    error: Optional[str] = None

    def __post_init__(self):
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")

    @property
    def absent(self) -> bool:
        return self.rank is None


def match_rank(
    diagnosis, truth: ComponentRef, manifest: TopologyManifest, failure_id: str = "", cutoff: int = RANK_CUTOFF
) -> RankOutcome:
    """1-based rank of the truth within the first ``cutoff`` entries.

    A pod belonging to a SERVICE truth counts as a hit; the reverse does not.
    """
    components = diagnosis.components() if hasattr(diagnosis, "components") else list(diagnosis)
    for i, c in enumerate(components[:cutoff], start=1):
        if c == truth:
            return RankOutcome(failure_id, i)
        if (
            truth.level is Level.SERVICE
            and c.level is Level.POD
            and c.name in manifest
            and manifest.service_of(c.name) == truth.name
        ):
            return RankOutcome(failure_id, i)
    return RankOutcome(failure_id, None)


def recall_at_k(outcomes: Sequence[RankOutcome], k: int) -> float:
    if not outcomes:
        raise EmptyOutcomeSet("no outcomes")
    return sum(1 for o in outcomes if o.rank is not None and o.rank <= k) / len(outcomes)


def mrr(outcomes: Sequence[RankOutcome]) -> float:
    if not outcomes:
        raise EmptyOutcomeSet("no outcomes")
    return sum(0.0 if o.rank is None else 1.0 / o.rank for o in outcomes) / len(outcomes)


@dataclass
class CaseResult:
    failure_id: str
    trace_id: str
    truth: str
    fault_kind: str
    rank: Optional[int]
    top1: Optional[str]
    seconds: float
    error: Optional[str] = None


@dataclass
class BenchmarkReport:
    recall: dict[int, float]
    mrr: float
    cases: list[CaseResult] = field(default_factory=list)
    mean_seconds_per_query: float = 0.0
    load_seconds: float = 0.0
    cutoff: int = RANK_CUTOFF

    @property
    def outcomes(self) -> list[RankOutcome]:
        return [RankOutcome(c.failure_id, c.rank, c.error) for c in self.cases]

    def to_dict(self) -> dict:
        return {
            "recall": {f"recall@{k}": v for k, v in sorted(self.recall.items())},
            "mrr": self.mrr,
            "n_cases": len(self.cases),
        "cutoff": self.cutoff,
            "mean_seconds_per_query": self.mean_seconds_per_query,
            "load_seconds": self.load_seconds,
            "cases": [asdict(c) for c in self.cases],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path) -> None:
        cols = ["failure_id", "trace_id", "truth", "fault_kind", "rank", "top1", "seconds", "error"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for c in self.cases:
                row = asdict(c)
                row["rank"] = "" if c.rank is None else c.rank
                w.writerow(row)


def aggregate(cases: list[CaseResult], load_seconds: float = 0.0, cutoff: int = RANK_CUTOFF) -> BenchmarkReport:
    outcomes = [RankOutcome(c.failure_id, c.rank) for c in cases]
    return BenchmarkReport(
        recall={k: recall_at_k(outcomes, k) for k in RECALL_KS},
        mrr=mrr(outcomes),
        cases=cases,
        mean_seconds_per_query=sum(c.seconds for c in cases) / len(cases),
        load_seconds=load_seconds,
        cutoff=cutoff,
    )


def run_benchmark(
    bundle, config=None, *, diagnose: Optional[Callable] = None, cutoff: int = RANK_CUTOFF
) -> BenchmarkReport:
    """Diagnose every ground-truth failure of ``bundle`` and score the rankings.

    A case that raises is recorded as ABSENT with its error; the run continues.
    """
    from spanrca.engine import EngineConfig, diagnose_case

    if not bundle.ground_truth:
        raise IngestError("dataset has no ground truth; cannot benchmark")
    cfg = config or EngineConfig()
    diagnose = diagnose or diagnose_case
    cases = []
    for case in bundle.ground_truth:
        started = time.perf_counter()
        try:
            report = diagnose(bundle, case.entry_trace_id, cfg, failure_id=case.failure_id)
            outcome = match_rank(report.ranked, case.root_cause, bundle.manifest, case.failure_id, cutoff)
            top1 = str(report.ranked.candidates[0].component) if report.ranked.candidates else None
            err = None
        except Exception as exc:  # harness never aborts mid-run
            log.warning("case %s failed: %s", case.failure_id, exc)
            outcome, top1, err = RankOutcome(case.failure_id, None), None, f"{type(exc).__name__}: {exc}"
        cases.append(
            CaseResult(
                failure_id=case.failure_id,
                trace_id=case.entry_trace_id,
                truth=str(case.root_cause),
                fault_kind=case.fault_kind,
                rank=outcome.rank,
                top1=top1,
                seconds=time.perf_counter() - started,
                error=err,
            )
        )
    return aggregate(cases, bundle.load_seconds, cutoff)


def run_suite(bundles: Iterable, config=None, cutoff: int = RANK_CUTOFF) -> BenchmarkReport:
    """Benchmark several bundles and aggregate all their cases into one report."""
    cases: list[CaseResult] = []
    load = 0.0
    for b in bundles:
        rep = run_benchmark(b, config, cutoff=cutoff)
        cases.extend(rep.cases)
        load += rep.load_seconds
    if not cases:
        raise EmptyOutcomeSet("no failure cases in suite")
    return aggregate(cases, load, cutoff)

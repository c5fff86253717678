"""Metric and log tools bound to one dataset, as handed to the per-span agents."""

from __future__ import annotations

import threading
from typing import Optional

from spanrca.errors import EmptyWindow
from spanrca.ingest import LogStore, MetricKey, MetricStore
from spanrca.logs import DEFAULT_MAX_ENTRIES, LogQuery, RelevanceRule, query_logs
from spanrca.metrics import (
    BEFORE_WINDOW,
    DEFAULT_DELTA_MS,
    DEFAULT_N_SIGMA,
    BaselineStats,
    MetricAnomaly,
    metric_keys,
    query_anomalous_metrics,
    reference_baseline,
)
from spanrca.model import ComponentRef, TopologyManifest


class DataTools:
    """Read-only tool facade; baselines are fitted lazily and cached per (series, window)."""

    def __init__(
        self,
        metrics: MetricStore,
        logs: LogStore,
        manifest: TopologyManifest,
        *,
        n_sigma: float = DEFAULT_N_SIGMA,
        delta_ms: int = DEFAULT_DELTA_MS,
        log_delta_ms: Optional[int] = None,
        rule: RelevanceRule = RelevanceRule(),
        log_max_entries: int = DEFAULT_MAX_ENTRIES,
        reference_policy: str = BEFORE_WINDOW,
    ):
        self.metrics = metrics
        self.logs = logs
        self.manifest = manifest
        self.n_sigma = n_sigma
        self.delta_ms = delta_ms
        self.log_delta_ms = log_delta_ms or delta_ms
        self.rule = rule
        self.log_max_entries = log_max_entries
        self.reference_policy = reference_policy
        self._baselines: dict[tuple[MetricKey, int, int], Optional[BaselineStats]] = {}
        self._lock = threading.Lock()

    def _baseline(self, key: MetricKey, t0: int) -> Optional[BaselineStats]:
        ck = (key, t0, self.delta_ms)
        with self._lock:
            if ck in self._baselines:
                return self._baselines[ck]
        try:
            base = reference_baseline(self.metrics, key, t0, self.delta_ms, self.reference_policy)
        except EmptyWindow:
            base = None
        with self._lock:
            self._baselines[ck] = base
        return base

    def metric_anomalies(self, pod: str, t0: int) -> list[MetricAnomaly]:
        comp = ComponentRef.pod(pod)
        baselines = {}
        for key in metric_keys(self.metrics, comp, self.manifest):
            base = self._baseline(key, t0)
            if base is not None:
                baselines[key] = base
        return query_anomalous_metrics(
            self.metrics, t0, self.delta_ms, comp, self.manifest, self.n_sigma, baselines, skip_missing=True
        )

    def relevant_logs(self, pod: str, t0: int) -> LogQuery:
        return query_logs(
            self.logs, t0, self.log_delta_ms, ComponentRef.pod(pod), self.manifest, self.rule, self.log_max_entries
        )

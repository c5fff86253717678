"""Baseline fitting and n-sigma retrieval of anomalous metrics around a timestamp."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from spanrca.errors import EmptyWindow, MissingBaseline
from spanrca.ingest import MetricKey, MetricStore
from spanrca.model import ComponentRef, Level, TopologyManifest

DEFAULT_N_SIGMA = 3.0
DEFAULT_DELTA_MS = 60_000

# Reference window policies for baseline estimation.
BEFORE_WINDOW = "before_window"    # all data strictly before t0 - delta
OUTSIDE_WINDOW = "outside_window"  # all data outside [t0 - delta, t0 + delta]
REFERENCE_POLICIES = (BEFORE_WINDOW, OUTSIDE_WINDOW)


@dataclass(frozen=True)
class BaselineStats:
    metric_key: MetricKey
    mean: float
    std: float
    sample_count: int


@dataclass(frozen=True)
class MetricAnomaly:
    metric_key: MetricKey
    points: tuple[tuple[int, float], ...]
    trajectory: tuple[tuple[int, float], ...]
    max_deviation_sigmas: float
    baseline: BaselineStats

    @property
    def component_id(self) -> str:
        return self.metric_key[0]

    @property
    def metric_name(self) -> str:
        return self.metric_key[1]


def _stats(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    # population std, two-pass
    std = float(np.sqrt(np.mean((values - mean) ** 2)))
    return mean, std


def fit_baseline(store: MetricStore, key: MetricKey, reference_window: tuple[int, int]) -> BaselineStats:
    start, end = reference_window
    _, vs = store.window(key, start, end)
    if vs.size == 0:
        raise EmptyWindow(f"no points for {key} in [{start}, {end}]")
    mean, std = _stats(vs)
    return BaselineStats(key, mean, std, int(vs.size))


def fit_baseline_excluding(store: MetricStore, key: MetricKey, excluded: tuple[int, int]) -> BaselineStats:
    """Baseline over every point of the series outside ``excluded`` (inclusive bounds)."""
    ts, vs = store.series(key)
    mask = (ts < excluded[0]) | (ts > excluded[1])
    if not mask.any():
        raise EmptyWindow(f"no points for {key} outside [{excluded[0]}, {excluded[1]}]")
    mean, std = _stats(vs[mask])
    return BaselineStats(key, mean, std, int(mask.sum()))


def reference_baseline(
    store: MetricStore, key: MetricKey, t0: int, delta: int, policy: str = BEFORE_WINDOW
) -> BaselineStats:
    if policy == BEFORE_WINDOW:
        ts, _ = store.series(key)
        first = int(ts[0]) if ts.size else 0
        return fit_baseline(store, key, (min(first, t0 - delta - 1), t0 - delta - 1))
    if policy == OUTSIDE_WINDOW:
        return fit_baseline_excluding(store, key, (t0 - delta, t0 + delta))
    raise ValueError(f"unknown reference window policy {policy!r}")


def metric_components(component: ComponentRef, manifest: TopologyManifest) -> list[str]:
    """Component ids whose metrics belong to M(C); a pod also pulls in its hosting node."""
    if component.level is Level.POD:
        return [component.name, manifest.node_of(component.name)]
    return [component.name]


def metric_keys(store: MetricStore, component: ComponentRef, manifest: TopologyManifest) -> list[MetricKey]:
    return [k for cid in metric_components(component, manifest) for k in store.keys_for(cid)]


def query_anomalous_metrics(
    store: MetricStore,
    t0: int,
    delta: int,
    component: ComponentRef,
    manifest: TopologyManifest,
    n: float,
    baselines: Mapping[MetricKey, BaselineStats],
    *,
    skip_missing: bool = False,
) -> list[MetricAnomaly]:
    """Metrics of ``component`` with at least one point in [t0-delta, t0+delta]
    where |m(t) - mean| > n * std. Non-anomalous metrics are omitted."""
    if n <= 0:
        raise ValueError("n must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    out = []
    for key in metric_keys(store, component, manifest):
        base = baselines.get(key)
        if base is None:
            if skip_missing:
                continue
            raise MissingBaseline(key)
        ts, vs = store.window(key, t0 - delta, t0 + delta)
        if vs.size == 0:
            continue
        dev = np.abs(vs - base.mean)
        flagged = dev > n * base.std
        if not flagged.any():
            continue
        out.append(
            MetricAnomaly(
                metric_key=key,
                points=tuple(zip(ts[flagged].tolist(), vs[flagged].tolist())),
                trajectory=tuple(zip(ts.tolist(), vs.tolist())),
                max_deviation_sigmas=_sigmas(float(dev.max()), base.std),
                baseline=base,
            )
        )
    return out


def _sigmas(deviation: float, std: float) -> float:
    if std > 0:
        return deviation / std
    return math.inf if deviation > 0 else 0.0


def max_deviation(
    store: MetricStore, key: MetricKey, t0: int, delta: int, policy: str = BEFORE_WINDOW
) -> Optional[float]:
    """Largest deviation (in sigmas) of a series inside the local window, None if unmeasurable."""
    try:
        base = reference_baseline(store, key, t0, delta, policy)
    except EmptyWindow:
        return None
    _, vs = store.window(key, t0 - delta, t0 + delta)
    if vs.size == 0:
        return None
    return _sigmas(float(np.abs(vs - base.mean).max()), base.std)

"""Root cause localization for microservice failures by recursive per-span agents.

Typical use::

    from spanrca.ingest import load_bundle
    from spanrca.engine import EngineConfig, diagnose_case

    bundle = load_bundle("data/")
    report = diagnose_case(bundle, "trace-id", EngineConfig())
    report.ranked.components()
"""

from spanrca.model import ComponentRef, Level, LogEntry, MetricPoint, Severity, Span, TopologyManifest

__version__ = "0.1.0"

__all__ = [
    "ComponentRef",
    "Level",
    "LogEntry",
    "MetricPoint",
    "Severity",
    "Span",
    "TopologyManifest",
    "__version__",
]

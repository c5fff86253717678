"""Command-line entry point: ``spanrca diagnose | evaluate | gen-fixtures``.

Every option can also come from a JSON file given with ``--config`` (keys are
the long option names with dashes replaced by underscores). Explicit flags win
over the file, and the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from spanrca.errors import InvalidSpec, RCLError
from spanrca.evaluation import RANK_CUTOFF

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_FAILURE = 2

DEFAULTS: dict[str, Any] = {
    "data_dir": None,
    "trace_id": None,
    "auto_detect": False,
    "reasoner": "heuristic",
    "n_sigma": 3.0,
    "delta_ms": 60_000,
    "reference_window": "before_window",
    "pool": 100,
    "top_n": 10,
    "out": None,
    "json": False,
    "seed": None,
    "log_min_severity": "WARN",
    "log_keywords": None,
    "log_status_patterns": None,
    "log_max_entries": 100,
    "log_delta_ms": None,
    "normal_latency_ms": None,
    "per_span_t0": False,
    "agent_timeout_ms": None,
    "llm_endpoint": None,
    "llm_model": None,
    "llm_synthesis": False,
    "top_k": RANK_CUTOFF,
    "spec": None,
    "suite": None,
    "count": 20,
}


class CliError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are SUPPRESS so that only explicitly given flags reach the namespace
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with option defaults")
    p.add_argument("--data-dir", default=S, help="dataset bundle directory")
    p.add_argument("--reasoner", choices=("heuristic", "llm"), default=S)
    p.add_argument("--n-sigma", type=float, default=S)
    p.add_argument("--delta-ms", type=int, default=S)
    p.add_argument("--reference-window", choices=("before_window", "outside_window"), default=S)
    p.add_argument("--pool", type=int, default=S, help="agents pool capacity K")
    p.add_argument("--top-n", type=int, default=S)
    p.add_argument("--out", default=S, help="output file (diagnose) or directory (evaluate)")
    p.add_argument("--json", action="store_true", default=S, help="machine-readable JSON on stdout")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--log-min-severity", default=S)
    p.add_argument("--log-keywords", default=S, help="comma-separated keyword list")
    p.add_argument("--log-status-patterns", default=S, help="comma-separated status patterns")
    p.add_argument("--log-max-entries", type=int, default=S)
    p.add_argument("--log-delta-ms", type=int, default=S)
    p.add_argument("--normal-latency-ms", type=float, default=S)
    p.add_argument("--per-span-t0", action="store_true", default=S)
    p.add_argument("--agent-timeout-ms", type=int, default=S)
    p.add_argument("--llm-endpoint", default=S)
    p.add_argument("--llm-model", default=S)
    p.add_argument("--llm-synthesis", action="store_true", default=S)
    p.add_argument("-v", "--verbose", action="store_true", default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spanrca", description="Trace-recursive root cause localization")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("diagnose", help="diagnose one failed request")
    _add_common(d)
    d.add_argument("--trace-id", default=argparse.SUPPRESS)
    d.add_argument("--auto-detect", action="store_true", default=argparse.SUPPRESS)

    e = sub.add_parser("evaluate", help="benchmark against ground truth")
    _add_common(e)
    e.add_argument("--top-k", type=int, default=argparse.SUPPRESS, help="rank cutoff for matching")

    g = sub.add_parser("gen-fixtures", help="write synthetic fault-injected bundles")
    _add_common(g)
    g.add_argument("--spec", default=argparse.SUPPRESS, help="scenario spec JSON file")
    g.add_argument("--suite", action="store_true", default=argparse.SUPPRESS, help="generate the mixed scenario suite")
    g.add_argument("--count", type=int, default=argparse.SUPPRESS)
    return parser


def resolve_options(ns: argparse.Namespace) -> dict[str, Any]:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    opts = dict(DEFAULTS)
    explicit = vars(ns)
    cfg_path = explicit.get("config")
    if cfg_path:
        try:
            doc = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {cfg_path}: {exc}") from None
        if not isinstance(doc, dict):
            raise CliError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS) - {"verbose"}
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        opts.update(doc)
    opts.update({k: v for k, v in explicit.items() if k not in ("config", "command")})
    for key in ("log_keywords", "log_status_patterns"):
        if isinstance(opts[key], str):
            opts[key] = [x for x in opts[key].split(",") if x]
    return opts


def engine_config(opts: dict[str, Any]):
    from spanrca.engine import EngineConfig
    from spanrca.logs import DEFAULT_KEYWORDS, DEFAULT_STATUS_PATTERNS
    from spanrca.reasoner import ReasonerConfig

    rcfg = ReasonerConfig(backend=opts["reasoner"])
    if opts["reasoner"] == "llm":
        rcfg = rcfg.with_env()
        overrides = {}
        if opts["llm_endpoint"]:
            overrides["endpoint"] = opts["llm_endpoint"]
        if opts["llm_model"]:
            overrides["model"] = opts["llm_model"]
        rcfg = dataclasses.replace(rcfg, **overrides)
    try:
        return EngineConfig(
            n_sigma=float(opts["n_sigma"]),
            delta_ms=int(opts["delta_ms"]),
            reference_window_policy=opts["reference_window"],
            log_delta_ms=opts["log_delta_ms"],
            log_min_severity=opts["log_min_severity"],
            log_keywords=tuple(opts["log_keywords"] if opts["log_keywords"] is not None else DEFAULT_KEYWORDS),
            log_status_patterns=tuple(
                opts["log_status_patterns"] if opts["log_status_patterns"] is not None else DEFAULT_STATUS_PATTERNS
            ),
            log_max_entries=int(opts["log_max_entries"]),
            pool_capacity=int(opts["pool"]),
            top_n=int(opts["top_n"]),
            per_span_t0=bool(opts["per_span_t0"]),
            agent_timeout_ms=opts["agent_timeout_ms"],
            normal_latency_ms=opts["normal_latency_ms"],
            llm_synthesis=bool(opts["llm_synthesis"]),
            reasoner=rcfg,
        )
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid configuration: {exc}") from None


def _emit(opts: dict[str, Any], payload: dict[str, Any], human: str) -> None:
    if opts["json"]:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(human + "\n")


def _require_dir(opts: dict[str, Any]) -> Path:
    if not opts["data_dir"]:
        raise CliError("--data-dir is required")
    path = Path(opts["data_dir"])
    if not path.is_dir():
        raise CliError(f"data directory {path} does not exist")
    return path


def cmd_diagnose(opts: dict[str, Any]) -> int:
    from spanrca.engine import detect_episodes, diagnose_case
    from spanrca.ingest import load_bundle

    data_dir = _require_dir(opts)
    if not opts["trace_id"] and not opts["auto_detect"]:
        raise CliError("give --trace-id or --auto-detect")
    cfg = engine_config(opts)
    bundle = load_bundle(data_dir)
    failure_id = None
    if opts["trace_id"]:
        trace_id = opts["trace_id"]
        for case in bundle.ground_truth or ():
            if case.entry_trace_id == trace_id:
                failure_id = case.failure_id
    else:
        episodes = detect_episodes(bundle, cfg)
        if not episodes:
            _emit(opts, {"status": "no_failure_detected"}, "no failed request detected")
            return EXIT_NO_FAILURE
        worst = max(episodes, key=lambda e: (e.ratio, e.trace_id))
        trace_id = worst.trace_id
        if len(episodes) > 1:
            logging.getLogger(__name__).info(
                "%d failed requests detected; diagnosing the slowest (%s)", len(episodes), trace_id
            )
    report = diagnose_case(bundle, trace_id, cfg, failure_id=failure_id)
    doc = report.to_dict()
    out = Path(opts["out"] or "report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    lines = [f"trace {trace_id}: root-level report blames {report.root_report.root_cause_name}"]
    for i, c in enumerate(report.ranked.candidates, start=1):
        lines.append(f"  {i:2d}. {c.component}  score={c.score:.3f}")
    lines.append(f"report written to {out}")
    _emit(opts, doc, "\n".join(lines))
    return EXIT_OK


def _find_bundles(root: Path) -> list[Path]:
    from spanrca.ingest import TRACES_FILE

    if (root / TRACES_FILE).is_file():
        return [root]
    return sorted(p.parent for p in root.glob(f"*/{TRACES_FILE}"))


def cmd_evaluate(opts: dict[str, Any]) -> int:
    from spanrca.evaluation import run_suite
    from spanrca.ingest import load_bundle

    root = _require_dir(opts)
    cutoff = int(opts["top_k"])
    if cutoff < 1:
        raise CliError("--top-k must be >= 1")
    cfg = engine_config(opts)
    dirs = _find_bundles(root)
    if not dirs:
        raise CliError(f"no dataset bundles under {root}")
    report = run_suite((load_bundle(d) for d in dirs), cfg, cutoff=cutoff)
    out_dir = Path(opts["out"] or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_json(out_dir / "benchmark_report.json")
    report.write_csv(out_dir / "benchmark_cases.csv")
    doc = report.to_dict()
    human = "  ".join(f"R@{k}={v:.3f}" for k, v in sorted(report.recall.items()))
    human = f"{len(report.cases)} cases  {human}  MRR={report.mrr:.3f}\nreport written to {out_dir / 'benchmark_report.json'}"
    _emit(opts, doc, human)
    return EXIT_OK


def cmd_gen_fixtures(opts: dict[str, Any]) -> int:
    from spanrca import fixtures

    out = Path(opts["out"] or "fixtures")
    seed = opts["seed"]
    if opts["suite"]:
        specs = fixtures.suite_scenarios(int(opts["count"]), seed or 0)
        written = [str(fixtures.generate(s, out / s.failure_id)) for s in specs]
    else:
        if not opts["spec"]:
            raise CliError("give --spec FILE or --suite")
        spec = fixtures.load_spec(opts["spec"])
        written = [str(fixtures.generate(spec, out, seed))]
    _emit(opts, {"bundles": written}, "\n".join(f"wrote {w}" for w in written))
    return EXIT_OK


COMMANDS = {"diagnose": cmd_diagnose, "evaluate": cmd_evaluate, "gen-fixtures": cmd_gen_fixtures}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        opts = resolve_options(ns)
        return COMMANDS[ns.command](opts)
    except InvalidSpec as exc:
        print(f"error: invalid scenario spec: {exc}", file=sys.stderr)
    except (CliError, RCLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except Exception as exc:  # last resort: never exit with a traceback
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

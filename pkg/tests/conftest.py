from __future__ import annotations

import json
import random
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from spanrca.model import PodPlacement, Span, TopologyManifest
from spanrca.traces import build_trace_graph


def make_span(sid, parent=None, ts=0, dur=10, service=None, pod=None, status="0", trace="T1", op="op"):
    service = service or f"svc-{sid}"
    return Span(trace, sid, parent, ts, service, pod or f"{service}-0", op, dur, status)


def random_tree_spans(n: int, rng: random.Random, max_fanout: int = 4, trace: str = "T1", width: int = 4):
    """Random tree with ``n`` spans, fixed-width ids ``s0000``, fan-out <= max_fanout."""
    ids = [f"s{i:0{width}d}" for i in range(n)]
    parents = {ids[0]: None}
    fanout = {ids[0]: 0}
    for sid in ids[1:]:
        open_ = [p for p in parents if fanout[p] < max_fanout]
        p = rng.choice(open_)
        parents[sid] = p
        fanout[p] += 1
        fanout[sid] = 0
    spans = []
    for i, sid in enumerate(ids):
        spans.append(make_span(sid, parents[sid], ts=1000 + i, dur=100 + rng.randrange(50), trace=trace))
    return spans


def manifest_for(spans, nodes: int = 2) -> TopologyManifest:
    pods = {}
    for s in spans:
        pods.setdefault(s.cmdb_id, s.service)
    return TopologyManifest(
        tuple(PodPlacement(p, svc, f"node-{i % nodes}") for i, (p, svc) in enumerate(sorted(pods.items())))
    )


def balanced_binary(depth: int, trace: str = "T1"):
    """Balanced binary tree of 2**depth - 1 spans."""
    n = 2**depth - 1
    spans = []
    for i in range(n):
        parent = None if i == 0 else f"b{(i - 1) // 2:03d}"
        spans.append(make_span(f"b{i:03d}", parent, ts=i, dur=100, trace=trace))
    return spans


@pytest.fixture
def four_span_graph():
    # A -> {B, C}, B -> {D}
    spans = [
        make_span("A", None, ts=0, dur=100, service="front"),
        make_span("C", "A", ts=50, dur=10, service="cart"),
        make_span("B", "A", ts=10, dur=60, service="reco"),
        make_span("D", "B", ts=20, dur=40, service="db"),
    ]
    return build_trace_graph(spans, "T1"), spans


# -- scripted OpenAI-compatible stub server ---------------------------------


class StubLLM:
    """Chat-completions stub. Each script item is a reply:
    ``str`` (content), ``(status, body)``, or ``("sleep", seconds, content)``."""

    def __init__(self):
        self.script: deque = deque()
        self.default = None
        self.requests: list[dict] = []
        self.calls = 0
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *a):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub.lock:
                    stub.calls += 1
                    stub.requests.append(body)
                    item = stub.script.popleft() if stub.script else stub.default
                if callable(item):
                    item = item(body)
                status, payload, headers = 200, None, {}
                if isinstance(item, tuple) and item and item[0] == "sleep":
                    time.sleep(item[1])
                    item = item[2]
                if isinstance(item, tuple):
                    status, payload = item[0], item[1]
                    if len(item) > 2:
                        headers = item[2]
                else:
                    payload = {"choices": [{"message": {"role": "assistant", "content": item}}]}
                raw = payload if isinstance(payload, (bytes, str)) else json.dumps(payload)
                raw = raw.encode() if isinstance(raw, str) else raw
                try:
                    self.send_response(status)
                    for k, v in headers.items():
                        self.send_header(k, v)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(raw)))
                    self.end_headers()
                    self.wfile.write(raw)
                except (BrokenPipeError, ConnectionResetError):
                    pass

        self.lock = threading.Lock()
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}/v1"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_llm():
    stub = StubLLM()
    yield stub
    stub.close()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

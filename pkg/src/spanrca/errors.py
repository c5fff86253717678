"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RCLError(Exception):
    """Base class for every error raised by spanrca."""


# -- topology -----------------------------------------------------------------


class UnknownPod(RCLError, KeyError):
    def __init__(self, pod: str):
        super().__init__(pod)
        self.pod = pod

    def __str__(self) -> str:
        return f"pod {self.pod!r} not present in topology manifest"


# -- ingestion ----------------------------------------------------------------


class IngestError(RCLError):
    pass


class ParseError(IngestError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
        self.message = message


class MissingColumn(IngestError):
    def __init__(self, path, expected, found):
        super().__init__(f"{path}: expected columns {list(expected)}, found {list(found)}")
        self.expected = list(expected)
        self.found = list(found)


# -- traces -------------------------------------------------------------------


class TraceError(RCLError):
    pass


class EmptyTrace(TraceError):
    pass


class MultipleRoots(TraceError):
    def __init__(self, trace_id: str, roots):
        super().__init__(f"trace {trace_id}: {len(roots)} parentless spans {sorted(roots)}")
        self.roots = sorted(roots)


class OrphanSpan(TraceError):
    def __init__(self, span_id: str, parent_id: str):
        super().__init__(f"span {span_id} references missing parent {parent_id}")
        self.span_id = span_id
        self.parent_id = parent_id


class CycleDetected(TraceError):
    pass


class DuplicateSpan(TraceError):
    pass


class UnknownSpan(TraceError, KeyError):
    def __init__(self, span_id: str):
        super().__init__(span_id)
        self.span_id = span_id

    def __str__(self) -> str:
        return f"span {self.span_id!r} not in trace graph"


class NonPositiveBaseline(RCLError, ValueError):
    pass


# -- metrics ------------------------------------------------------------------


class EmptyWindow(RCLError, ValueError):
    pass


class MissingBaseline(RCLError, KeyError):
    def __init__(self, key):
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        return f"no baseline for metric {self.key}"


# -- reasoner -----------------------------------------------------------------


class ReasonerError(RCLError):
    pass


class SchemaError(ReasonerError):
    pass


class TransportError(ReasonerError):
    retryable = True


class LLMTimeoutError(TransportError, TimeoutError):
    pass


class RateLimited(TransportError):
    pass


class AuthError(ReasonerError):
    retryable = False


# -- orchestration ------------------------------------------------------------


class ToolError(RCLError):
    pass


class PoolMisconfigured(RCLError, ValueError):
    pass


class AgentFailed(RCLError):
    def __init__(self, span_id: str, cause: BaseException | str):
        super().__init__(f"agent for span {span_id} failed: {cause}")
        self.span_id = span_id
        self.cause = cause


class MissingEvidence(RCLError, KeyError):
    def __init__(self, span_id: str):
        super().__init__(span_id)
        self.span_id = span_id

    def __str__(self) -> str:
        return f"no self-evidence for span {self.span_id!r}"


# -- evaluation / fixtures ----------------------------------------------------


class EmptyOutcomeSet(RCLError, ValueError):
    pass


class InvalidSpec(RCLError, ValueError):
    pass

"""Extraction and validation of JSON replies from chatty models."""

from __future__ import annotations

import json
import re
from typing import Any, Optional

from spanrca.errors import SchemaError
from spanrca.evidence import ConsolidatedEvidence, SelfEvidence

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n?(.*?)```", re.DOTALL)
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")


def _balanced(text: str, start: int) -> Optional[str]:
    """The balanced {...} or [...] block opening at ``start``, honouring JSON strings."""
    opener = text[start]
    closer = "}" if opener == "{" else "]"
    depth = 0
    in_str = escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                return text[start : i + 1] if ch == closer else None
    return None


def _loads(candidate: str) -> Any:
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        return json.loads(_TRAILING_COMMA.sub(r"\1", candidate))


def extract_json(text: str, kind: type = dict) -> Any:
    """First JSON object (or list, with ``kind=list``) found in ``text``.

    Code fences are tried first, then a scan for the first balanced block.
    """
    if text is None:
        raise SchemaError("empty reply")
    opener = "{" if kind is dict else "["
    sources = [m.group(1) for m in _FENCE.finditer(text)] + [text]
    for src in sources:
        pos = src.find(opener)
        while pos != -1:
            block = _balanced(src, pos)
            if block is not None:
                try:
                    value = _loads(block)
                except json.JSONDecodeError:
                    value = None
                if isinstance(value, kind):
                    return value
            pos = src.find(opener, pos + 1)
    raise SchemaError(f"no JSON {kind.__name__} found in reply")


def _text(obj: dict, key: str, required: bool = True) -> str:
    if key not in obj or obj[key] is None:
        if required:
            raise SchemaError(f"missing required field {key!r}")
        return ""
    value = obj[key]
    if isinstance(value, str):
        return value
    if isinstance(value, (list, dict)):
        return json.dumps(value, ensure_ascii=False)
    return str(value)


def parse_self_evidence(text: str) -> SelfEvidence:
    obj = extract_json(text, dict)
    if "is_abnormal" not in obj:
        raise SchemaError("missing required field 'is_abnormal'")
    if not isinstance(obj["is_abnormal"], bool):
        raise SchemaError(f"is_abnormal must be a boolean, got {obj['is_abnormal']!r}")
    return SelfEvidence(
        span_id=_text(obj, "span_id"),
        service=_text(obj, "service_name"),
        is_abnormal=obj["is_abnormal"],
        key_symptoms=_text(obj, "key_symptoms"),
        hypothesis=_text(obj, "hypothesis"),
    )


def parse_consolidated_evidence(text: str) -> ConsolidatedEvidence:
    obj = extract_json(text, dict)
    raw = obj.get("confidence")
    if raw is None or isinstance(raw, bool):
        raise SchemaError("missing or non-numeric 'confidence'")
    try:
        confidence = float(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"confidence is not a number: {raw!r}") from None
    if confidence != confidence:
        raise SchemaError("confidence is NaN")
    return ConsolidatedEvidence(
        span_id=_text(obj, "span_id"),
        service=_text(obj, "service_name"),
        local_root_cause=_text(obj, "local_root_cause").strip(),
        reason=_text(obj, "reason", required=False),
        confidence=confidence,
    )

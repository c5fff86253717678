"""OpenAI-compatible chat-completion transport with retries and a concurrency cap."""

from __future__ import annotations

import logging
import threading
import time
from typing import Optional

import httpx

from spanrca.errors import AuthError, LLMTimeoutError, RateLimited, ReasonerError, TransportError
from spanrca.reasoner.config import ReasonerConfig
from spanrca.reasoner.prompts import to_messages

log = logging.getLogger(__name__)

DEFAULT_CONCURRENCY = 100

_lock = threading.Lock()
_clients: dict[tuple[str, float], httpx.Client] = {}
_gates: dict[tuple[str, int], threading.BoundedSemaphore] = {}


def chat_url(endpoint: str) -> str:
    url = endpoint.rstrip("/")
    return url if url.endswith("/chat/completions") else url + "/chat/completions"


def _client(url: str, timeout: float) -> httpx.Client:
    key = (url, timeout)
    with _lock:
        if key not in _clients:
            _clients[key] = httpx.Client(timeout=httpx.Timeout(timeout))
        return _clients[key]


def _gate(url: str, cap: int) -> threading.BoundedSemaphore:
    key = (url, cap)
    with _lock:
        if key not in _gates:
            _gates[key] = threading.BoundedSemaphore(cap)
        return _gates[key]


def _extract_text(payload) -> str:
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise TransportError("response has no choices") from None
    message = choice.get("message") or {}
    text = message.get("content")
    if text is None:
        text = choice.get("text")
    if text is None:
        raise TransportError("response choice carries no text")
    return text


def _send(client: httpx.Client, url: str, body: dict, cfg: ReasonerConfig) -> str:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    try:
        resp = client.post(url, json=body, headers=headers)
    except httpx.TimeoutException as exc:
        raise LLMTimeoutError(f"request timed out after {cfg.timeout_s}s") from exc
    except httpx.HTTPError as exc:
        raise TransportError(f"transport failure: {exc}") from exc

    if resp.status_code in (401, 403):
        raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
    if resp.status_code == 429:
        err = RateLimited("rate limited (429)")
        err.retry_after = _retry_after(resp)
        raise err
    if resp.status_code >= 500:
        raise TransportError(f"server error {resp.status_code}")
    if resp.status_code >= 400:
        raise ReasonerError(f"request rejected ({resp.status_code}): {resp.text[:200]}")
    try:
        payload = resp.json()
    except ValueError:
        raise TransportError("response body is not JSON") from None
    return _extract_text(payload)


def _retry_after(resp: httpx.Response) -> Optional[float]:
    raw = resp.headers.get("Retry-After")
    try:
        return float(raw) if raw is not None else None
    except ValueError:
        return None


def complete(prompt: str, cfg: ReasonerConfig) -> str:
    """Send one prompt and return the model's text.

    Retries transport failures, timeouts, 5xx and 429 up to ``cfg.max_retries``
    times with exponential backoff. Credential errors are never retried.
    """
    if not cfg.endpoint:
        raise ReasonerError("LLM endpoint is not configured (set RCL_LLM_ENDPOINT)")
    url = chat_url(cfg.endpoint)
    client = _client(url, cfg.timeout_s)
    gate = _gate(url, cfg.max_concurrency or DEFAULT_CONCURRENCY)
    body = {"model": cfg.model, "messages": to_messages(prompt), "temperature": cfg.temperature}

    attempt = 0
    while True:
        try:
            with gate:
                return _send(client, url, body, cfg)
        except TransportError as exc:
            if attempt >= cfg.max_retries:
                raise
            delay = min(cfg.backoff_max_s, cfg.backoff_s * (2 ** attempt))
            hinted = getattr(exc, "retry_after", None)
            if hinted is not None:
                delay = min(cfg.backoff_max_s, max(delay, hinted))
            log.info("LLM call failed (%s); retry %d/%d in %.2fs", exc, attempt + 1, cfg.max_retries, delay)
            time.sleep(delay)
            attempt += 1

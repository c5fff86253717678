from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Optional

from spanrca.metrics import DEFAULT_N_SIGMA

HEURISTIC = "heuristic"
LLM = "llm"

ENV_ENDPOINT = "RCL_LLM_ENDPOINT"
ENV_API_KEY = "RCL_LLM_API_KEY"
ENV_MODEL = "RCL_LLM_MODEL"
ENV_TIMEOUT_MS = "RCL_LLM_TIMEOUT_MS"


@dataclass(frozen=True)
class ReasonerConfig:
    backend: str = HEURISTIC
    # LLM transport
    endpoint: Optional[str] = None
    api_key: Optional[str] = None
    model: str = "gpt-4o-mini"
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_s: float = 0.5
    backoff_max_s: float = 8.0
    max_concurrency: Optional[int] = None  # None: follow the agents pool capacity
    temperature: float = 0.0
    # heuristic thresholds
    n_sigma: float = DEFAULT_N_SIGMA
    min_error_logs: int = 1
    child_threshold: float = 0.6
    decay: float = 0.95
    self_confidence: float = 0.8
    boosted_confidence: float = 0.9
    unexplained_share: float = 0.5

    def __post_init__(self):
        if self.backend not in (HEURISTIC, LLM):
            raise ValueError(f"unknown reasoner backend {self.backend!r}")
        if not self.timeout_s > 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def with_env(self) -> "ReasonerConfig":
        """Fill transport settings from RCL_LLM_* environment variables when unset."""
        timeout = os.environ.get(ENV_TIMEOUT_MS)
        return replace(
            self,
            endpoint=self.endpoint or os.environ.get(ENV_ENDPOINT) or None,
            api_key=self.api_key or os.environ.get(ENV_API_KEY) or None,
            model=os.environ.get(ENV_MODEL) or self.model,
            timeout_s=float(timeout) / 1000.0 if timeout else self.timeout_s,
        )

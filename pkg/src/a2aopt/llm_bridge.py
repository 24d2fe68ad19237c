"""Remote-LLM gradient agent over an OpenAI-compatible chat-completions endpoint.

The bridge only *returns* a gradient; applying the step is the caller's job.
Numbers go over the wire as decimals with 12 significant digits.
"""
from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

import httpx
import numpy as np

from .errors import ArgumentError, ConfigError, ParseFailureError, StatusError, TransportError
from .geometry import Array, TaskData

SIG_DIGITS = 12

SYSTEM_TEMPLATE = """You are an expert optimization agent working on linear regression gradient descent.

        PROBLEM SETUP:
        - Input features X: {d}x{n} matrix (values provided in each request)
        - Target values y: {n}-dimensional vector (values provided in each request)
        - Current weight w: {d}-dimensional vector (what you'll receive)

        TASK: Calculate the gradient \\Delta L with respect to w, where L = ||X^T w - y||^2

        FORMULA: \\Delta L = X(X^T w - y)
        - X^T w produces an {n}-dimensional vector (predictions)
        - X^T w - y produces an {n}-dimensional vector (residuals)
        - X @ (residuals) produces a {d}-dimensional vector (gradient)

        CRITICAL:
        1. Use the EXACT X and y matrices provided in each request
        2. Your output gradient must be exactly {d}-dimensional
        3. Do NOT make up dummy data - use the actual matrices given
        4. Perform the calculation step by step

The user will provide w_current and the matrices X, y. Calculate and return the {d}-dimensional gradient vector, do not ask the user to validate what is to be done. The user will not be able to interact with you. Be highly precise and accurate on your computations, you will be evaluated on the distance with the ground truth gradient."""

RESPONSE_SCHEMA = {
    "type": "object",
    "properties": {
        "thinking": {"type": "string"},
        "gradient_next": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["thinking", "gradient_next"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    top_p: float = 1.0
    max_retries: int = 3
    timeout: float = 60.0
    reasoning_effort: str | None = None
    frequency_penalty: float | None = None
    presence_penalty: float | None = None
    requests_per_second: float | None = None
    max_concurrent: int = 4
    transcript_path: str | None = None

    def __post_init__(self):
        if self.max_retries < 1:
            raise ArgumentError("max_retries must be >= 1")
        if not self.timeout > 0:
            raise ArgumentError("timeout must be positive")
        if self.max_concurrent < 1:
            raise ArgumentError("max_concurrent must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "EndpointConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown endpoint fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Prompts:
    system: str
    user: str


@dataclass(frozen=True)
class GradientResponse:
    thinking: str
    gradient_next: Array


def fmt_number(x: float) -> str:
    s = format(float(x), f".{SIG_DIGITS}g")
    return "0" if s == "-0" else s


def fmt_vector(v) -> str:
    return "[" + ", ".join(fmt_number(x) for x in np.asarray(v, dtype=float).ravel()) + "]"


def fmt_matrix(M) -> str:
    M = np.asarray(M, dtype=float)
    return "[" + ", ".join(fmt_vector(row) for row in M) + "]"


def render_prompts(d: int, n: int, task: TaskData, w_current, history) -> Prompts:
    """System prompt from the fixed template; user message with one ``name = JSON`` line per quantity."""
    w_current = np.asarray(w_current, dtype=float)
    H = np.asarray(history, dtype=float).reshape(-1, d) if len(history) else np.zeros((0, d))
    if task.X.shape != (d, n) or task.y.shape != (n,) or w_current.shape != (d,):
        raise ArgumentError("task/w_current shapes do not match (d, n)")
    user = "\n".join([
        f"X ({d}x{n} matrix, row i holds feature i of every example):",
        f"X = {fmt_matrix(task.X)}",
        f"y ({n}-dimensional vector):",
        f"y = {fmt_vector(task.y)}",
        f"w_current ({d}-dimensional vector):",
        f"w_current = {fmt_vector(w_current)}",
        f"history (previous iterates w_0..w_{{t-1}}, oldest first, {H.shape[0]} vectors):",
        f"history = {fmt_matrix(H)}",
        f'Return a JSON object with keys "thinking" and "gradient_next" '
        f"(exactly {d} numbers: the gradient X(X^T w_current - y)).",
    ])
    return Prompts(system=SYSTEM_TEMPLATE.format(d=d, n=n), user=user)


_LINE = re.compile(r"^(X|y|w_current|history) = (.*)$", re.MULTILINE)


def parse_user_message(text: str) -> dict[str, Array]:
    """Inverse of the numeric part of :func:`render_prompts` (used by mocks and audits)."""
    out = {}
    for name, payload in _LINE.findall(text):
        out[name] = np.array(json.loads(payload), dtype=float)
    return out


class TokenBucket:
    """Blocking rate limiter shared by concurrent callers."""

    def __init__(self, rate: float, capacity: float | None = None):
        if not rate > 0:
            raise ArgumentError("rate must be positive")
        self.rate = float(rate)
        self.capacity = float(capacity if capacity is not None else max(1.0, rate))
        self._tokens = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class Transcript:
    """Append-only JSONL log of raw request/response pairs (never contains the API key)."""

    def __init__(self, path: str | os.PathLike | None):
        self.path = path
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")


def request_body(cfg: EndpointConfig, prompts: Prompts) -> dict[str, Any]:
    body: dict[str, Any] = {
        "model": cfg.model_name,
        "messages": [
            {"role": "system", "content": prompts.system},
            {"role": "user", "content": prompts.user},
        ],
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "response_format": {
            "type": "json_schema",
            "json_schema": {"name": "GradientResponse", "strict": True, "schema": RESPONSE_SCHEMA},
        },
    }
    for key in ("reasoning_effort", "frequency_penalty", "presence_penalty"):
        value = getattr(cfg, key)
        if value is not None:
            body[key] = value
    return body


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$")


def parse_gradient(raw: str, d: int) -> GradientResponse:
    """Validate a chat-completion response body; raises ValueError on any schema violation."""
    payload = json.loads(raw)
    content = payload["choices"][0]["message"]["content"]
    if not isinstance(content, str):
        raise ValueError("message content is not a string")
    obj = json.loads(_FENCE.sub("", content.strip()))
    if not isinstance(obj, dict) or "gradient_next" not in obj:
        raise ValueError("missing gradient_next")
    vec = obj["gradient_next"]
    if not isinstance(vec, list) or len(vec) != d:
        raise ValueError(f"gradient_next must be a list of {d} numbers")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in vec):
        raise ValueError("gradient_next has non-numeric entries")
    g = np.array(vec, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient_next has non-finite entries")
    return GradientResponse(thinking=str(obj.get("thinking", "")), gradient_next=g)


def request_gradient(
    cfg: EndpointConfig,
    prompts: Prompts,
    d: int,
    client: httpx.Client | None = None,
    limiter: TokenBucket | None = None,
    transcript: Transcript | None = None,
) -> GradientResponse:
    """POST one chat completion; re-ask (fresh request) on parse/shape failure up to ``max_retries`` attempts."""
    api_key = os.environ.get(cfg.api_key_env)
    if not api_key:
        raise ConfigError(f"environment variable {cfg.api_key_env} is not set")
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
    body = request_body(cfg, prompts)
    own_client = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    transcript = transcript or Transcript(cfg.transcript_path)
    last_body = None
    try:
        for attempt in range(1, cfg.max_retries + 1):
            if limiter is not None:
                limiter.acquire()
            record = {"timestamp": datetime.now(timezone.utc).isoformat(), "attempt": attempt, "request": body}
            try:
                resp = client.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except httpx.HTTPError as exc:
                record["error"] = repr(exc)
                transcript.write(record)
                raise TransportError(f"request to {url} failed: {exc}") from exc
            record.update(status=resp.status_code, response=resp.text)
            transcript.write(record)
            if not 200 <= resp.status_code < 300:
                raise StatusError(resp.status_code, resp.text)
            last_body = resp.text
            try:
                return parse_gradient(resp.text, d)
            except (ValueError, KeyError, IndexError, TypeError):
                continue
        raise ParseFailureError(
            f"no valid {d}-dimensional gradient after {cfg.max_retries} attempts",
            last_body=last_body, attempts=cfg.max_retries,
        )
    finally:
        if own_client:
            client.close()


class LlmAgent:
    """Callable backend: ``(task, history) -> gradient`` through the remote model."""

    def __init__(self, cfg: EndpointConfig, client: httpx.Client | None = None):
        self.cfg = cfg
        self.client = client or httpx.Client(timeout=cfg.timeout)
        self.limiter = TokenBucket(cfg.requests_per_second) if cfg.requests_per_second else None
        self.transcript = Transcript(cfg.transcript_path)
        self._slots = threading.BoundedSemaphore(cfg.max_concurrent)
        self.calls = 0

    def __call__(self, task: TaskData, history) -> Array:
        H = np.asarray(history, dtype=float)
        prompts = render_prompts(task.d, task.n, task, H[-1], H[:-1])
        with self._slots:
            self.calls += 1
            return request_gradient(self.cfg, prompts, task.d, self.client, self.limiter,
                                    self.transcript).gradient_next

    def close(self) -> None:
        self.client.close()


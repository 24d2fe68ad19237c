"""Shared fixtures: a local chat-completions mock that computes the exact gradient."""
from __future__ import annotations

import json
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from a2aopt.llm_bridge import parse_user_message
from a2aopt.lsa import TrainConfig, train_lsa


def completion(content: str) -> dict:
    return {
        "id": "cmpl-mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content},
                     "finish_reason": "stop"}],
    }


class MockState:
    """Scripted behaviours are consumed one per request; afterwards the server is formula-faithful."""

    def __init__(self):
        self.script: deque[str] = deque()
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self.lock = threading.Lock()

    def reset(self):
        with self.lock:
            self.script.clear()
            self.requests.clear()
            self.headers.clear()


def _gradient(body: dict) -> list[float]:
    user = next(m["content"] for m in body["messages"] if m["role"] == "user")
    nums = parse_user_message(user)
    X, y, w = nums["X"], nums["y"], nums["w_current"]
    return (X @ (X.T @ w - y)).tolist()


def make_handler(state: MockState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep pytest output clean
            pass

        def _send(self, status: int, payload) -> None:
            data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            with state.lock:
                state.requests.append(body)
                state.headers.append(dict(self.headers))
                mode = state.script.popleft() if state.script else "ok"
            if mode.startswith("raw:"):
                self._send(200, completion(mode[4:]))
                return
            g = _gradient(body)
            if mode == "ok":
                self._send(200, completion(json.dumps({"thinking": "X(X^T w - y)", "gradient_next": g})))
            elif mode == "fenced":
                self._send(200, completion("```json\n" + json.dumps({"thinking": "", "gradient_next": g}) + "\n```"))
            elif mode == "bad_shape":
                self._send(200, completion(json.dumps({"thinking": "", "gradient_next": g + [0.0]})))
            elif mode == "garbage":
                self._send(200, completion("I think the gradient is roughly zero."))
            elif mode == "nan":
                self._send(200, completion('{"thinking": "", "gradient_next": [NaN' + ", 0" * (len(g) - 1) + "]}"))
            elif mode == "status500":
                self._send(500, {"error": {"message": "upstream exploded"}})
            elif mode == "status429":
                self._send(429, {"error": {"message": "slow down"}})
            else:
                raise AssertionError(f"unknown mock mode {mode}")

    return Handler


@pytest.fixture(scope="session")
def mock_endpoint():
    state = MockState()
    server = ThreadingHTTPServer(("127.0.0.1", 0), make_handler(state))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    state.base_url = f"http://127.0.0.1:{server.server_address[1]}/v1"
    yield state
    server.shutdown()
    server.server_close()


@pytest.fixture
def mock(mock_endpoint, monkeypatch):
    mock_endpoint.reset()
    monkeypatch.setenv("A2A_TEST_KEY", "sk-test-secret")
    return mock_endpoint


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one ``criterion: PASS/FAIL detail`` line; printed in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(criterion: int, passed: bool, detail: str) -> bool:
        lines.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def trained_lsa(tmp_path_factory):
    """LSA agent trained once per session with the default recipe: (params, checkpoint path, seconds)."""
    t0 = time.perf_counter()
    params = train_lsa(TrainConfig())
    path = tmp_path_factory.mktemp("lsa") / "lsa.json"
    path.write_text(params.to_json())
    return params, path, time.perf_counter() - t0

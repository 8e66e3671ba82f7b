"""Shared fixtures: parsed sample dataset and a scriptable local HTTP server."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from stemstep_eval.data import sample_path
from stemstep_eval.dataset import parse_dataset


@pytest.fixture(scope="session")
def sample_records():
    return parse_dataset(sample_path())


@pytest.fixture(scope="session")
def sample_by_id(sample_records):
    return {record.id: record for record in sample_records}


class MockServer:
    """Tiny chat/embedding server with per-path canned behavior.

    Paths: /chat (fixed completion), /status/<code>, /slow (stalls),
    /malformed (non-JSON body), /embed (unit basis vectors by token order).
    Records every request body and headers for assertions.
    """

    def __init__(self):
        self.requests: list[dict] = []
        self.reply_text = "scripted completion"
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length).decode("utf-8") if length else ""
                try:
                    body = json.loads(raw) if raw else {}
                except json.JSONDecodeError:
                    body = {"_raw": raw}
                outer.requests.append(
                    {"path": self.path, "body": body, "headers": dict(self.headers)}
                )
                if self.path.startswith("/status/"):
                    code = int(self.path.rsplit("/", 1)[1])
                    self._send(code, json.dumps({"error": "scripted failure"}))
                elif self.path == "/slow":
                    time.sleep(2.0)
                    self._send(200, json.dumps(outer._completion()))
                elif self.path == "/malformed":
                    self._send(200, "this is not json {")
                elif self.path == "/missing-choices":
                    self._send(200, json.dumps({"choices": []}))
                elif self.path == "/embed":
                    tokens = body.get("tokens", [])
                    dim = max(len(tokens), 1)
                    vectors = []
                    for idx, _ in enumerate(tokens):
                        vec = [0.0] * dim
                        vec[idx] = 1.0
                        vectors.append(vec)
                    self._send(200, json.dumps({"vectors": vectors}))
                else:
                    self._send(200, json.dumps(outer._completion()))

            def _send(self, code: int, payload: str):
                data = payload.encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def _completion(self) -> dict:
        return {
            "choices": [
                {"message": {"role": "assistant", "content": self.reply_text}, "finish_reason": "stop"}
            ]
        }

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def url(self, path: str) -> str:
        return self.base_url + path

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture(scope="session")
def mock_server():
    server = MockServer()
    yield server
    server.close()

"""Deterministic in-process endpoint for tests and offline runs.

Speaks just enough of the chat-completions wire protocol:

* synthesis requests (object-typed response schema) are answered with the
  first element of the first JSON array found in the prompt — i.e. the most
  similar reference entity — falling back to a minimal schema-conforming
  instance when the prompt carries no references;
* judge requests (integer-typed response schema) are answered with scripted
  digits, cycling;
* ``status_script`` and ``payload_script`` let tests inject failures: HTTP
  status codes and raw response contents, consumed one per request.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Sequence

from .schema import minimal_instance


def _first_array_element(text: str) -> Optional[dict]:
    decoder = json.JSONDecoder()
    idx = text.find("[")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(text, idx)
        except ValueError:
            pass
        else:
            if isinstance(value, list) and value and isinstance(value[0], dict):
                return value[0]
        idx = text.find("[", idx + 1)
    return None


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 - http.server naming
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw)
        except json.JSONDecodeError:
            body = {}
        status, payload = self.server.endpoint.respond(body)
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # silence per-request stderr noise
        pass


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, endpoint: "MockEndpoint"):
        super().__init__(("127.0.0.1", 0), _Handler)
        self.endpoint = endpoint


class MockEndpoint:
    def __init__(self, scores: Sequence[int] = (4,)):
        self._lock = threading.Lock()
        self.scores = list(scores)
        self._score_idx = 0
        self.status_script: list[int] = []
        self.payload_script: list[str] = []
        self.request_count = 0
        self.requests: list[dict] = []
        self.record_requests = True
        self._server: Optional[_Server] = None
        self._thread: Optional[threading.Thread] = None

    # -- lifecycle ---------------------------------------------------------
    def start(self) -> "MockEndpoint":
        self._server = _Server(self)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockEndpoint":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def url(self) -> str:
        if self._server is None:
            raise RuntimeError("mock endpoint is not running")
        return f"http://127.0.0.1:{self._server.server_address[1]}/v1/chat/completions"

    # -- behavior ----------------------------------------------------------
    def _next_score(self) -> int:
        score = self.scores[self._score_idx % len(self.scores)]
        self._score_idx += 1
        return score

    def respond(self, body: dict) -> tuple[int, dict]:
        with self._lock:
            self.request_count += 1
            if self.record_requests:
                self.requests.append(body)
            status = self.status_script.pop(0) if self.status_script else 200
            override = self.payload_script.pop(0) if self.payload_script else None
            schema = (
                body.get("response_format", {}).get("json_schema", {}).get("schema", {})
            )
            if override is not None:
                content = override
            elif schema.get("type") == "integer":
                content = str(self._next_score())
            else:
                content = None
        if status == 400:
            return 400, {"error": {"message": "response_format is not supported here"}}
        if status != 200:
            return status, {"error": {"message": f"scripted status {status}"}}
        if content is None:
            prompt = ""
            messages = body.get("messages", [])
            if messages:
                prompt = messages[0].get("content", "")
            reference = _first_array_element(prompt)
            if reference is not None:
                content = json.dumps(reference)
            else:
                content = json.dumps(minimal_instance(schema)) if schema else "{}"
        return 200, {
            "model": body.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": max(1, len(str(body)) // 4),
                "completion_tokens": max(1, len(content) // 4),
                "total_tokens": max(2, (len(str(body)) + len(content)) // 4),
            },
        }

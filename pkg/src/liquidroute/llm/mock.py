"""Local chat-completion endpoint for tests and offline benchmarking."""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

Responder = Callable[[dict], str]


def prompt_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ReplayBook:
    """Maps a user prompt (by digest) to the reply the endpoint should send.

    Unknown prompts get an empty reply, which the bridge treats as a
    parse failure.
    """

    def __init__(self) -> None:
        self._replies: dict[str, str] = {}
        self._lock = threading.Lock()
        self.misses = 0

    def register(self, prompt: str, reply: str) -> None:
        with self._lock:
            self._replies[prompt_digest(prompt)] = reply

    def __call__(self, body: dict) -> str:
        user = body["messages"][-1]["content"]
        with self._lock:
            reply = self._replies.get(prompt_digest(user))
            if reply is None:
                self.misses += 1
        return reply or ""


class MockEndpoint:
    """Threaded HTTP server answering POSTs in the chat-completion shape.

    Use as a context manager; ``url`` is valid inside the block.  Every
    decoded request body is kept in ``requests``.  ``fail_first`` makes
    the first n requests return HTTP 503 so retry paths can be exercised.
    """

    def __init__(self, responder: Responder, fail_first: int = 0, host: str = "127.0.0.1"):
        self.responder = responder
        self.fail_first = fail_first
        self.requests: list[dict] = []
        self._host = host
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        if self._server is None:
            raise RuntimeError("mock endpoint is not running")
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def _handler(self):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (stdlib naming)
                size = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(size).decode("utf-8"))
                except json.JSONDecodeError:
                    self._send(400, {"error": "bad json"})
                    return
                outer.requests.append(body)
                if outer.fail_first > 0:
                    outer.fail_first -= 1
                    self._send(503, {"error": "unavailable"})
                    return
                content = outer.responder(body)
                self._send(200, {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})

            def _send(self, code: int, payload: dict) -> None:
                data = json.dumps(payload).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        return Handler

    def start(self) -> "MockEndpoint":
        self._server = ThreadingHTTPServer((self._host, 0), self._handler())
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

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from asmplan.kgraph import KnowledgeGraph, empty_graph, ingest_document, load_document
from asmplan.scenegraph import SceneGraph, load_scene

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
DOC_NAMES = ("c901", "c902", "c903", "c904", "c905", "pressure_valve")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def documents():
    return [load_document(FIXTURES / "docs" / f"{name}.json") for name in DOC_NAMES]


@pytest.fixture(scope="session")
def graph(documents) -> KnowledgeGraph:
    g = empty_graph()
    for doc in documents:
        g = ingest_document(g, doc)
    return g


@pytest.fixture(scope="session")
def scene() -> SceneGraph:
    return load_scene(FIXTURES / "scene.json")


class StubEndpoint:
    """In-process chat-completion endpoint with scripted responses."""

    def __init__(self) -> None:
        self.responses: list[tuple[int, str]] = []
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                with stub._lock:
                    stub.requests.append(json.loads(body or b"{}"))
                    stub.headers.append(dict(self.headers))
                    status, payload = (
                        stub.responses.pop(0)
                        if stub.responses
                        else (200, json.dumps(chat_body("ok")))
                    )
                data = payload.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):  # silence request logging
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def enqueue(self, status: int, payload: str) -> None:
        self.responses.append((status, payload))

    def enqueue_content(self, content: str) -> None:
        self.enqueue(200, json.dumps(chat_body(content)))

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def chat_body(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


@pytest.fixture()
def stub_endpoint():
    stub = StubEndpoint()
    yield stub
    stub.close()

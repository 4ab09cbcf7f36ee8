import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class MockChat:
    """Local chat-completions endpoint answering from a question-keyed table.

    Questions of the form ``Q<n> [lo,hi]`` are answered with that interval.
    ``fail_first`` makes the first N requests return HTTP 500.
    """

    def __init__(self):
        self.requests = []
        self.fail_first = 0
        self.lock = threading.Lock()
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with mock.lock:
                    mock.requests.append({"path": self.path, "body": body,
                                          "auth": self.headers.get("Authorization")})
                    fail = mock.fail_first > 0
                    if fail:
                        mock.fail_first -= 1
                if fail:
                    self.send_response(500)
                    self.end_headers()
                    return
                user = body["messages"][1]["content"]
                m = re.search(r"\[(-?\d+),(-?\d+)\]", user.split("<question>")[1])
                text = f"Reasoning...\nThe propensity range is [{m.group(1)}, {m.group(2)}]"
                payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]})
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload.encode())

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_chat():
    srv = MockChat()
    yield srv
    srv.close()


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per criterion; lines are echoed at the end of the run."""

    def emit(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

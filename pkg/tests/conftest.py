import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlparse

import pytest
from hypothesis import settings

from chase.optimizer import OptimizerConfig
from chase.profile import PowerProfile, ProfileEntry
from chase.simulator import TrainingJob
from chase.trace import CarbonTrace

MIDNIGHT = 1673740800  # 2023-01-15 00:00 UTC
HALF_HOUR = 1800

# derandomized so the suite gives the same answer on every run
settings.register_profile("repro", deadline=None, derandomize=True, max_examples=100)
settings.load_profile("repro")

_acceptance_lines: list[str] = []


def record_criterion(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def three_limit_profile():
    # the worked example used throughout the optimizer tests
    return PowerProfile(
        (
            ProfileEntry(100, 105.0, 400.0),
            ProfileEntry(200, 190.0, 700.0),
            ProfileEntry(300, 295.0, 850.0),
        )
    )


def golden_scenario():
    """Two half-hour periods at 600 then 200 g/kWh after a day of flat history."""
    trace = CarbonTrace(MIDNIGHT, HALF_HOUR, tuple([500.0] * 48 + [600.0, 200.0]))
    profile = PowerProfile((ProfileEntry(200, 190.0, 700.0), ProfileEntry(300, 295.0, 850.0)))
    job = TrainingJob(2_025_000, MIDNIGHT + 48 * HALF_HOUR)
    cfg = OptimizerConfig(eta=0.7, max_power=300.0, max_carbon_intensity=750.0)
    return trace, profile, job, cfg


@pytest.fixture
def golden():
    return golden_scenario()


# --- HTTP stub for trace fetching ---------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    routes: dict = {}
    seen: list = []

    def do_GET(self):
        url = urlparse(self.path)
        self.seen.append(parse_qs(url.query))
        status, body = self.routes.get(url.path, (404, "not found"))
        payload = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _StubHandler.routes = {}
    _StubHandler.seen = []
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _StubHandler
    server.shutdown()
    server.server_close()

import json
from pathlib import Path

import pytest

from hpcload.transport import Transport, TransportConfig

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
FROZEN_EPOCH = 1714564800.0  # 2024-05-01T12:00:00Z


def frozen_clock():
    return FROZEN_EPOCH


@pytest.fixture
def cluster3():
    return DATA / "cluster3"


@pytest.fixture
def fixture_transport(cluster3):
    return Transport(TransportConfig(fixture_root=cluster3))


@pytest.fixture
def expected_cluster3():
    return json.loads((GOLDEN / "cluster3_expected.json").read_text())


@pytest.fixture
def make_tree(tmp_path):
    """Write a fixture tree from a {relative path: text} mapping."""

    def make(files, name="tree"):
        root = tmp_path / name
        for rel, text in files.items():
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        root.mkdir(exist_ok=True)
        return root

    return make


# --- acceptance summary -------------------------------------------------------

_acceptance_lines = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion of the tool")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    status = "PASS" if rep.passed else "FAIL"
    _acceptance_lines[number] = f"criterion {number}: {status}  {title} ({rep.duration:.2f}s)"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_lines):
        terminalreporter.write_line(_acceptance_lines[number])

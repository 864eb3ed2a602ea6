import os

import pytest

from hybridgshp.ground import GroundProperties
from hybridgshp.synth import node_fixture


@pytest.fixture(scope="session")
def ground():
    return GroundProperties()


@pytest.fixture(scope="session")
def fixture_profiles():
    """Cooling-dominated ``(heating, cooling)`` node profiles."""
    return node_fixture(0)


@pytest.fixture(scope="session")
def gcache(tmp_path_factory):
    return str(tmp_path_factory.mktemp("gcache"))


@pytest.fixture
def pinned_time(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    return int(os.environ["SOURCE_DATE_EPOCH"])


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(k[1:])):
        ok, title, detail = RESULTS[key]
        terminalreporter.write_line(f"{key:>4} {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")

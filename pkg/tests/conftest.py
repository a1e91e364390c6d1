from __future__ import annotations

import random

import pytest

from goa.agents import AgentRunConfig
from goa.backends import MockBackend
from goa.embedding import HashEmbedder

_CRITERIA: dict[int, dict] = {}
_ACTIVE: dict[str, int] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    # reports carry no markers, so map through the node id
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    num = _ACTIVE.get(report.nodeid)
    if num is not None:
        if hasattr(report, "wasxfail") and report.skipped:
            _CRITERIA[num]["outcomes"].append("xfailed")
            _CRITERIA[num].setdefault("notes", []).append(report.wasxfail.removeprefix("reason: "))
        else:
            _CRITERIA[num]["outcomes"].append(report.outcome)


def pytest_itemcollected(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        num, title = mark.args
        _ACTIVE[item.nodeid] = num
        _CRITERIA.setdefault(num, {"title": title, "outcomes": []})


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        outcomes = _CRITERIA[num]["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif "failed" in outcomes:
            status = "FAIL"
        elif "xfailed" in outcomes:
            status = "FAIL"  # known, documented shortfall kept visible
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {num:>2}: {status:<7} {_CRITERIA[num]['title']}")
        for note in _CRITERIA[num].get("notes", []):
            terminalreporter.write_line(f"              known shortfall: {note}")


@pytest.fixture
def embedder():
    return HashEmbedder(256, 0)


@pytest.fixture
def backend():
    return MockBackend()


@pytest.fixture
def cfg():
    return AgentRunConfig(t_max=2048)


@pytest.fixture
def rng():
    return random.Random(1234)

import json
import sys
from pathlib import Path

import pytest

from sase.model import AttributeSchema, Schema
from sase.runtime import builtin_scenario, load_scenario

sys.path.insert(0, str(Path(__file__).parent))

WEBSERVICE = builtin_scenario("webservice-v1")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in summary")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    results = item.config._acceptance
    label = marker.args[0]
    if report.failed:
        results[label] = False
    elif report.when == "call":
        results.setdefault(label, True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(results):
        terminalreporter.write_line(f"{'PASS' if results[label] else 'FAIL'}  {label}")


@pytest.fixture
def webservice():
    return load_scenario(WEBSERVICE)


@pytest.fixture
def webservice_doc():
    return json.loads(WEBSERVICE.read_text())


@pytest.fixture(scope="session")
def small_schema():
    return Schema([
        AttributeSchema.numeric("threads", 1, 64, integer_valued=True, controllable=True),
        AttributeSchema.numeric("rate", 0, 1000),
        AttributeSchema.categorical("mode", ["fast", "safe"]),
    ])

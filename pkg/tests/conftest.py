import numpy as np
import pytest

from dds.synthetic import canonical_spec, generate_scene

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _criteria_markers.get(report.nodeid)
    if marker is None:
        return
    n, title = marker
    ok = report.outcome == "passed"
    prev = _criteria.get(n, (title, True))
    _criteria[n] = (title, prev[1] and ok)


_criteria_markers = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria_markers[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(scope="session")
def canonical_scene():
    return generate_scene(canonical_spec(sigma=0.05, n_cameras=6), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

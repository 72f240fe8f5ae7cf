import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    # a failing setup or teardown marks the criterion failed as well
    if report.failed or report.when == "call":
        if _criteria.get(report.nodeid) != "failed":
            _criteria[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    import test_acceptance as acc
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_criteria):
        name = nodeid.rsplit("::", 1)[1]
        num = int(name.split("_")[2])
        title = (getattr(acc, name).__doc__ or "").strip().splitlines()[0]
        verdict = "PASS" if _criteria[nodeid] == "passed" else _criteria[nodeid].upper()
        terminalreporter.write_line(f"criterion {num}: {verdict} {title}")

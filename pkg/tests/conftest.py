"""Collects one verdict per acceptance criterion and prints them after the run."""
import pytest

_TITLES = {
    1: "kinematics invariants",
    2: "Pontryagin / tightening oracle",
    3: "solver vs brute force, Jacobians",
    4: "robust safety, 100 seeds",
    5: "comparative efficiency",
    6: "solve-time budget (reported)",
    7: "height adaptation",
    8: "mode-switching hygiene",
    9: "determinism",
}
_details: dict[int, str] = {}
_outcomes: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number this test decides")


@pytest.fixture
def report(request):
    """``report(text)`` attaches a one-line summary to the test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def record(text):
        _details[marker.args[0]] = text
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _outcomes[n] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        verdict = _outcomes[n]
        if n == 6 and verdict == "PASS":
            verdict = "REPORT"
        line = f"criterion {n} [{_TITLES[n]}]: {verdict}"
        if n in _details:
            line += f"  ({_details[n]})"
        terminalreporter.write_line(line)

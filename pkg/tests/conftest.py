import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(label): marks a test as one acceptance criterion; "
        "each gets its own pass/fail line in the terminal summary",
    )
    # Another collected test tree may carry an identical conftest; share
    # one outcome list so labels appear exactly once.
    if not hasattr(config, "_criterion_outcomes"):
        config._criterion_outcomes = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or getattr(report, "_criterion_logged", False):
        return
    label = marker.args[0]
    if report.when == "call":
        report._criterion_logged = True
        word = "PASS" if report.passed else "FAIL"
        item.config._criterion_outcomes.append((label, word))
    elif report.when == "setup" and not report.passed:
        report._criterion_logged = True
        word = "SKIP" if report.skipped else "FAIL"
        item.config._criterion_outcomes.append((label, word))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = getattr(config, "_criterion_outcomes", [])
    if not outcomes:
        return
    config._criterion_outcomes = []
    terminalreporter.section("acceptance criteria")
    for label, word in outcomes:
        terminalreporter.write_line(f"[{word}] {label}")

import pytest

_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    number = getattr(report, "acceptance", None)
    if number is None:
        return
    ok = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    prev = _results.get(number[0])
    # one line per criterion: any failure wins over passes
    if prev is None or ok == "FAIL" or (prev[0] == "SKIP" and ok == "PASS"):
        _results[number[0]] = (ok, number[1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        ok, title = _results[number]
        terminalreporter.write_line(f"AC{number} {ok:4s} {title}")

"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_TITLES: dict[int, str] = {}
_OUTCOMES: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    _TITLES[number] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _OUTCOMES.setdefault(number, []).append((item.name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        results = _OUTCOMES[number]
        failed = [name for name, ok in results if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {number}: {_TITLES[number]} ({len(results) - len(failed)}/{len(results)} checks)"
        if failed:
            line += f"; failing: {', '.join(failed)}"
        terminalreporter.write_line(line)

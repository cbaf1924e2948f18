"""Collects acceptance-criterion outcomes and prints one line per criterion at the end of the run."""

import pytest

_OUTCOMES: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            item.user_properties.append(("acceptance", (mark.args[0], mark.args[1])))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key != "acceptance":
            continue
        number, title = value
        if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
            _OUTCOMES[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, verdict = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_results: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def measured(request):
    """List the test appends human-readable measurements to."""
    notes: list[str] = []
    request.node.stash[_notes_key] = notes
    return notes


_notes_key = pytest.StashKey[list]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    notes = "; ".join(item.stash.get(_notes_key, []))
    _results[number] = ("PASS" if report.passed else "FAIL", title, notes)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        status, title, notes = _results[number]
        line = f"AC{number:<2} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{notes}]" if notes else ""))

"""Collects acceptance outcomes and prints one line per criterion."""
import pytest

_RESULTS: dict[int, tuple[str, str, float, str]] = {}


@pytest.fixture
def note(request):
    """Attach a measured value to the criterion line of the running test."""
    def add(text):
        request.node.user_properties.append(("note", text))
    return add


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    notes = "; ".join(v for k, v in item.user_properties if k == "note")
    _RESULTS[n] = (title, "PASS" if rep.passed else "FAIL", rep.duration, notes)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, status, secs, notes = _RESULTS[n]
        extra = f" [{notes}]" if notes else ""
        terminalreporter.write_line(f"criterion {n:2d} {status}  {title} ({secs:.1f} s){extra}")

import numpy as np
import pytest

from vecgr import gridmap

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        number, title = marker
        prev = _ACCEPTANCE.get(number)
        ok = report.outcome == "passed"
        _ACCEPTANCE[number] = (title, ok if prev is None else (prev[1] and ok))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m is not None:
        item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(scope="session")
def free_grid():
    return gridmap.from_rows(["." * 50] * 50)


@pytest.fixture(scope="session")
def corridor_grid():
    rows = np.full((100, 100), ".")
    rows[30:70, 30:70] = "@"
    return gridmap.from_rows(["".join(r) for r in rows])

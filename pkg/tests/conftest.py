import pytest

from mdqw.analysis import sweep_saturation


class SaturationCache:
    """Saturation rows shared by every test in the session, keyed by ``(x_D, n, s, T)``."""

    def __init__(self):
        self._rows = {}

    def get(self, points, T):
        missing = [p for p in set(points) if (*p, T) not in self._rows]
        if missing:
            for row in sweep_saturation(missing, T):
                self._rows[(row.x_D, row.n, row.s, T)] = row
        return {p: self._rows[(*p, T)] for p in points}


@pytest.fixture(scope="session")
def saturations():
    return SaturationCache()


_criteria = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _criteria.append((props["criterion"], report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _criteria:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {name}: {detail}")

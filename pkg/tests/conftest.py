import pytest

from nlhardy.constants import FracParams
from nlhardy.geometry import FarField, build_grid, label_ball_config

# criterion number -> list of (test id, passed)
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        # an xfail is an unmet clause, so it counts against the criterion
        ok = rep.passed and not hasattr(rep, "wasxfail")
        _CRITERIA.setdefault(mark.args[0], []).append((item.name, ok))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        runs = _CRITERIA[k]
        status = "PASS" if all(ok for _, ok in runs) else "FAIL"
        bad = [name for name, ok in runs if not ok]
        extra = f"  (unmet: {', '.join(bad)})" if bad else ""
        terminalreporter.write_line(f"criterion {k:2d}: {status}{extra}")


@pytest.fixture(scope="session")
def p1():
    return FracParams(1, 0.25)


@pytest.fixture(scope="session")
def mixed_1d(p1):
    """d=1 reference mixed configuration: Omega |x|<0.5, D the shell (0.75, 2)."""
    grid = build_grid(1, 2.0, 128, FarField.NEUMANN_TRUNCATED)
    return label_ball_config(grid, 0.5, (0.75, 2.0))


@pytest.fixture(scope="session")
def small_mixed(p1):
    grid = build_grid(1, 2.0, 48, FarField.NEUMANN_TRUNCATED)
    return label_ball_config(grid, 0.5, (0.75, 2.0))

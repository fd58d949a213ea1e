import numpy as np
import pytest

from dupinlab.catalog import (
    make_cyclide_by_inversion,
    make_ellipsoid,
    make_flat_strip,
    make_sphere,
    make_torus,
    make_tube_over_torus,
    stereographic_lift,
)


@pytest.fixture(scope="session")
def sphere():
    return make_sphere(1.0, 3)


@pytest.fixture(scope="session")
def torus():
    return make_torus(2.0, 1.0)


@pytest.fixture(scope="session")
def cyclide(torus):
    return make_cyclide_by_inversion(torus, center=(0.0, 0.0, 5.0), inv_radius=1.0)


@pytest.fixture(scope="session")
def ellipsoid():
    return make_ellipsoid(3.0, 2.0, 1.0)


@pytest.fixture(scope="session")
def tube():
    return make_tube_over_torus(2.0, 1.0, 0.2)


@pytest.fixture(scope="session")
def flat():
    return make_flat_strip(1.0)


@pytest.fixture(scope="session")
def lifted_sphere(sphere):
    return stereographic_lift(sphere)


@pytest.fixture(scope="session")
def lifted_torus(torus):
    return stereographic_lift(torus)


@pytest.fixture(scope="session")
def lifted_cyclide(cyclide):
    return stereographic_lift(cyclide)


@pytest.fixture(scope="session")
def lifted_ellipsoid(ellipsoid):
    return stereographic_lift(ellipsoid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one pass/fail line per criterion ---------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "results": []})
    if report.when == "setup" and report.passed:
        return
    xfailed = hasattr(report, "wasxfail")
    ok = report.passed and not xfailed
    entry["results"].append((item.name, ok, xfailed))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        ok = all(r[1] for r in entry["results"])
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {entry['title']}"
        known = [name for name, _, xfailed in entry["results"] if xfailed]
        bad = [name for name, passed, xfailed in entry["results"] if not passed and not xfailed]
        if bad:
            line += f"  [failing: {', '.join(bad)}]"
        if known:
            line += f"  [expected failure: {', '.join(known)}]"
        terminalreporter.write_line(line)

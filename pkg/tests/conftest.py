import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anisoreg import profiles
from anisoreg.field import Grid
from anisoreg.params import StructureParams
from anisoreg.solver import SolverConfig, prototype_flux, solve

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

P = 1.5
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def params():
    return StructureParams(2, 1, P)


@pytest.fixture(scope="session")
def flux():
    return prototype_flux(P)


def unit_grid(n: int, ndim: int = 2, split: int = 1) -> Grid:
    return Grid.box([n] * ndim, [0.0] * ndim, [1.0] * ndim, split)


def solve_family(n: int):
    g = unit_grid(n)
    out = []
    for prof in profiles.family():
        u, rep = solve(g, profiles.boundary(g, prof), prototype_flux(P), SolverConfig())
        assert rep.converged, rep.residual
        out.append(u)
    return out


@pytest.fixture(scope="session")
def family65():
    return solve_family(65)


@pytest.fixture(scope="session")
def family129():
    return solve_family(129)


@pytest.fixture(scope="session")
def sine33():
    g = unit_grid(33)
    u, rep = solve(g, profiles.boundary(g, profiles.sine), prototype_flux(P))
    assert rep.converged
    return u


# -------------------------------------------------------------- acceptance summary

def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.failed:
        prev = _ACCEPTANCE.get(crit, "PASS")
        _ACCEPTANCE[crit] = "FAIL" if report.failed or prev == "FAIL" else "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = marker.args[0]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {crit:2d}: {_ACCEPTANCE[crit]}")


@pytest.fixture(scope="session")
def sine65():
    g = unit_grid(65)
    u, rep = solve(g, profiles.boundary(g, profiles.sine), prototype_flux(P))
    assert rep.converged
    return u

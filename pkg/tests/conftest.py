import numpy as np
import pytest

from bistanton.meanfield import find_fixed_points
from bistanton.model import KerrParams


def pytest_configure(config):
    # (criterion id, passed, detail) rows appended by tests/test_acceptance.py
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for ident, ok, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {ident}  {detail}")


@pytest.fixture
def record_criterion(request):
    """Report one acceptance line and print it; the caller still asserts."""

    def record(ident, ok, detail):
        request.config.acceptance_lines.append((ident, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {ident}  {detail}")
        return ok

    return record


@pytest.fixture(scope="session")
def fig2_params():
    return KerrParams(gamma=1.0, delta=-10.0, epsilon=3.2)


@pytest.fixture(scope="session")
def fig2_points(fig2_params):
    return find_fixed_points(fig2_params)


@pytest.fixture(scope="session")
def small_bistable():
    """A bistable point with small fixed-point radii, cheap to shoot."""
    return KerrParams(gamma=1.0, delta=-3.0, epsilon=1.6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import warnings

import numpy as np
import pytest

from slowfast.coeffs import compute_coefficients
from slowfast.equilibrium import solve_equilibrium
from slowfast.linops import assemble_linearized
from slowfast.model import active_2d, free_abp, von_mises


def _bundle(spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eq = solve_equilibrium(spec)
        ops = assemble_linearized(spec, eq)
        coeffs = compute_coefficients(spec, eq, ops)
    return spec, eq, ops, coeffs


@pytest.fixture(scope="session")
def abp2():
    return _bundle(free_abp(n=2))


@pytest.fixture(scope="session")
def abp1():
    return _bundle(free_abp(n=1))


@pytest.fixture(scope="session")
def vm():
    return _bundle(von_mises())


@pytest.fixture(scope="session")
def act():
    return _bundle(active_2d(coupling=0.2))


@pytest.fixture(scope="session")
def custom():
    """Interacting model with non-constant mobility, external potential and two velocity components."""
    from slowfast.model import ModelSpec

    spec = ModelSpec(M=64, U=lambda t: 0.5 * np.cos(t) + 0.2 * np.sin(2 * t),
                     W=lambda a, b: 0.3 * np.cos(a - b) + 0.1 * np.cos(2 * (a - b)),
                     Gamma=lambda t: 1 + 0.3 * np.cos(t), V=(np.cos, lambda t: np.sin(t) + 0.2 * np.cos(2 * t)),
                     name="custom")
    return _bundle(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for res in sorted(RESULTS, key=lambda r: r.number):
            terminalreporter.write_line(res.line())

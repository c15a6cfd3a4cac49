import warnings

import numpy as np
import pytest
from scipy.special import i0

from slowfast.equilibrium import (fixed_point_map, density_bounds, solve_equilibrium, uniqueness_probe,
                                  zero_flux_residual)
from slowfast.errors import NoConvergence, NonContractive, NonEquilibriumModel
from slowfast.model import ModelSpec, active_2d, free_abp, von_mises


def test_free_abp_uniform(abp2):
    spec, eq, *_ = abp2
    assert np.max(np.abs(eq.G - 1 / (2 * np.pi))) < 1e-14


def test_von_mises_closed_form(vm):
    spec, eq, *_ = vm
    exact = np.exp(-np.cos(spec.grid.nodes)) / (2 * np.pi * i0(1.0))
    assert np.max(np.abs(eq.G - exact)) < 1e-9


@pytest.mark.parametrize("fixture", ["abp2", "vm", "act", "custom"])
def test_state_invariants(fixture, request):
    spec, eq, *_ = request.getfixturevalue(fixture)
    assert abs(eq.mass - 1) < 1e-10
    assert np.min(eq.G) > 0
    assert eq.residual < 1e-9
    assert zero_flux_residual(spec, eq.G) == pytest.approx(eq.residual)
    assert eq.bounds["lower"] <= np.min(eq.G) and np.max(eq.G) <= eq.bounds["upper"]
    T, H = fixed_point_map(spec, eq.G)
    assert np.max(np.abs(T - eq.G)) < 1e-9
    assert np.max(np.abs(np.exp(-eq.H) - eq.G)) < 1e-9


def test_active_2d_even(act):
    spec, eq, *_ = act
    assert np.max(np.abs(eq.G - spec.grid.reflect(eq.G))) < 1e-9


def test_symmetry_inheritance():
    spec = ModelSpec(M=64, U=lambda t: np.cos(t) + 0.3 * np.cos(2 * t), W=lambda a, b: -1.5 * np.cos(a - b),
                     V=(np.cos,))
    eq = solve_equilibrium(spec, G0=np.exp(np.cos(spec.grid.nodes)))
    assert eq.residual < 1e-9
    assert np.max(np.abs(eq.G - spec.grid.reflect(eq.G))) < 1e-9


def test_density_bounds_constants():
    b = density_bounds(von_mises())
    assert b["C"] == pytest.approx(1.0, abs=1e-12)
    assert b["upper"] == pytest.approx(np.exp(2 * np.pi) / np.pi, rel=1e-12)


def test_uniqueness_probe():
    r = uniqueness_probe(von_mises(), trials=8, seed=1)
    assert r.max_distance < 1e-8
    r = uniqueness_probe(free_abp(), trials=8, seed=2)
    assert all(np.max(np.abs(s.G - 1 / (2 * np.pi))) < 1e-10 for s in r.states)


def test_noncontractive_flag_when_coupling_grows():
    flags = []
    # anti-aligning coupling keeps G uniform, where the estimate is |coupling| / 2
    for c in (0.5, 1.0, 3.0):
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            try:
                solve_equilibrium(active_2d(M=64, coupling=c), G0=np.exp(np.cos(np.linspace(-np.pi, np.pi, 64, endpoint=False))))
            except NoConvergence:
                pass
        flags.append(any(issubclass(w.category, NonContractive) for w in rec))
    assert flags[0] is False and flags[-1] is True


def test_nonequilibrium_model_is_reported():
    # a constant angular force has no periodic potential
    spec = ModelSpec(M=32, U=None, V=(np.cos,))
    object.__setattr__(spec, "dU", np.full(32, 0.5))
    with pytest.warns(NonEquilibriumModel):
        solve_equilibrium(spec, max_iter=5, tol_eq=np.inf)


def test_no_convergence():
    with pytest.raises(NoConvergence):
        solve_equilibrium(von_mises(), max_iter=2)

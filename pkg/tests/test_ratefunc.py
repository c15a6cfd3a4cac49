import numpy as np
import pytest

from slowfast.errors import EpsilonTooLarge
from slowfast.grid import SpatialGrid
from slowfast.hminus import INF
from slowfast.ratefunc import (A_eps, DensityPath, build_recovery, fit_order, gamma_sweep, liminf_bound,
                               rate_eps, rate_limit, time_integral)


@pytest.fixture(scope="module")
def setup(abp1):
    spec, eq, ops, coeffs = abp1
    sg = SpatialGrid((2 * np.pi,), (32,))
    return spec, eq, coeffs, sg, sg.nodes[0]


def _le(t, rho, eq, sg):
    return DensityPath.local_equilibrium(t, rho, eq.G, sg)


def _heat(t, q, D):
    # exact solution of the limit equation for a single Fourier mode
    return 1 + 0.5 * np.cos(q)[None] * np.exp(-D * t)[:, None]


def test_path_validation(setup):
    spec, eq, coeffs, sg, q = setup
    with pytest.raises(ValueError):
        DensityPath(np.array([0.0, 1.0]), np.ones((2, 32, spec.M)), sg)
    with pytest.raises(ValueError):
        DensityPath(np.array([0.0, 1.0, 0.5]), np.ones((3, 32, spec.M)), sg)


def test_time_integral_inf():
    assert time_integral([0, 1, 2], [0.0, INF, 1.0]) == INF
    assert time_integral([0, 1, 2], [1.0, 1.0, 1.0]) == pytest.approx(2.0)


def test_A_eps_vanishes_on_static_equilibrium(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 5)
    p = _le(t, np.ones((5, 32)), eq, sg)
    for s in range(5):
        assert np.max(np.abs(A_eps(p, spec, eq, s, 0.1))) < 1e-12
    assert rate_eps(p, spec, eq, epsilon=0.1) < 1e-20


def test_A_eps_has_zero_angular_mass_on_recovery(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 11)
    rec = build_recovery(_le(t, _heat(t, q, coeffs.Dmat[0, 0]), eq, sg), eq, coeffs, 0.1)
    for s in range(11):
        assert np.max(np.abs(spec.grid.quad(A_eps(rec.path, spec, eq, s, 0.1)))) < 1e-12
    # the bare local equilibrium carries mass eps d_t rho
    p = _le(t, _heat(t, q, coeffs.Dmat[0, 0]), eq, sg)
    np.testing.assert_allclose(spec.grid.quad(A_eps(p, spec, eq, 4, 0.1)), 0.1 * p.drhodt[4], atol=1e-12)


def test_rate_eps_infinite_when_mass_not_conserved(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 11)
    p = _le(t, np.ones((11, 32)) * (1 + t)[:, None], eq, sg)
    assert rate_eps(p, spec, eq, epsilon=0.1) == INF


def test_rate_eps_grows_like_inverse_eps_squared(setup):
    # static profile that is not a local equilibrium
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 11)
    th = spec.grid.nodes
    f = np.ones((11, 32, 1)) * (eq.G * (1 + 0.3 * np.cos(th)))[None, None]
    p = DensityPath(t, f, sg)
    scaled = [rate_eps(p, spec, eq, epsilon=e) * e**2 for e in (0.2, 0.1, 0.05)]
    assert scaled[0] > 0
    np.testing.assert_allclose(scaled, scaled[0], rtol=1e-10)


def test_rate_limit_zero_on_diffusion_solution(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 51)
    p = _le(t, _heat(t, q, coeffs.Dmat[0, 0]), eq, sg)
    assert rate_limit(p, eq, coeffs) < 1e-9


def test_rate_limit_infinite_off_local_equilibrium(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 5)
    p = DensityPath(t, np.ones((5, 32, spec.M)) * eq.G, sg)
    assert rate_limit(p, eq, coeffs) == INF


def test_rate_limit_quadratic_in_perturbation(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 51)
    rho = _heat(t, q, coeffs.Dmat[0, 0])
    pert = np.sin(2 * q)[None] * np.sin(np.pi * t)[:, None]
    ratios = [rate_limit(_le(t, rho * (1 + d * pert), eq, sg), eq, coeffs) / d**2 for d in (1e-2, 1e-3)]
    assert ratios[0] > 0
    assert abs(ratios[0] - ratios[1]) < 1e-3 * ratios[1]


def test_rate_limit_time_refinement_second_order(setup):
    spec, eq, coeffs, sg, q = setup
    vals = []
    for S in (26, 51, 101, 201):
        t = np.linspace(0, 1, S)
        vals.append(rate_limit(_le(t, _heat(t, q, 1.0), eq, sg), eq, coeffs))
    diffs = np.abs(np.diff(vals))
    assert 3.0 < diffs[0] / diffs[1] < 5.0
    assert 3.0 < diffs[1] / diffs[2] < 5.0


def test_liminf_zero_on_diffusion_solution(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 51)
    p = _le(t, _heat(t, q, coeffs.Dmat[0, 0]), eq, sg)
    rep = liminf_bound(p, spec, eq, coeffs, base=p, epsilon=0.1)
    assert rep.branch == "local_equilibrium"
    assert abs(rep.value) < 1e-9 and abs(rep.limit_value) < 1e-9


def test_liminf_limit_equals_rate_limit(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 51)
    base = _le(t, _heat(t, q, 1.0), eq, sg)
    rec = build_recovery(base, eq, coeffs, 0.05)
    rep = liminf_bound(rec.path, spec, eq, coeffs, base=base, epsilon=0.05)
    assert abs(rep.limit_value - rate_limit(base, eq, coeffs)) < 1e-6
    assert rep.value <= rate_eps(rec.path, spec, eq, epsilon=0.05) + 1e-10


def test_liminf_non_equilibrium_branch_blows_up(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 11)
    th = spec.grid.nodes
    f = np.ones((11, 32, 1)) * (eq.G * (1 + 0.3 * np.cos(th)))[None, None]
    p = DensityPath(t, f, sg)
    reps = [liminf_bound(p, spec, eq, coeffs, epsilon=e) for e in (0.2, 0.1)]
    assert reps[0].branch == "non_equilibrium" and reps[0].limit_value == INF
    assert reps[1].value > 3.9 * reps[0].value > 0


def test_recovery_on_diffusion_solution(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 51)
    base = _le(t, _heat(t, q, coeffs.Dmat[0, 0]), eq, sg)
    rec = build_recovery(base, eq, coeffs, 0.1)
    assert np.max(np.abs(rec.a)) < 1e-4
    # the corrector carries no angular mass
    assert np.max(np.abs(spec.grid.quad(rec.f1))) < 1e-12
    np.testing.assert_allclose(rec.path.marginal(), base.rho, atol=1e-12)


def test_recovery_constant_rho_is_trivial(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 5)
    base = _le(t, np.full((5, 32), 2.0), eq, sg)
    rec = build_recovery(base, eq, coeffs, 0.3)
    assert np.max(np.abs(rec.f1)) < 1e-12
    assert rate_eps(rec.path, spec, eq, epsilon=0.3) < 1e-20


def test_recovery_rejects_large_epsilon(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 11)
    base = _le(t, 1 + 0.99 * np.cos(q)[None] * np.exp(-coeffs.Dmat[0, 0] * t)[:, None], eq, sg)
    with pytest.raises(EpsilonTooLarge):
        build_recovery(base, eq, coeffs, 5.0)


def test_recovery_value_approaches_limit(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 51)
    base = _le(t, _heat(t, q, 1.0), eq, sg)
    I = rate_limit(base, eq, coeffs)
    rec = build_recovery(base, eq, coeffs, 0.1)
    assert abs(rate_eps(rec.path, spec, eq, epsilon=0.1) - I) < 0.15 * I


def test_gamma_sweep_on_diffusion_solution(setup):
    spec, eq, coeffs, sg, q = setup
    t = np.linspace(0, 1, 21)
    base = _le(t, _heat(t, q, coeffs.Dmat[0, 0]), eq, sg)
    rep = gamma_sweep(base, spec, eq, coeffs, eps_ladder=(0.2, 0.1))
    # the recovery error is O(eps^2) even when the limit value is zero
    assert rep.rate_limit < 1e-9
    assert np.all(rep.rate_eps < 1e-3)
    assert 1.8 < rep.order < 2.3
    assert rep.monotone and rep.sandwich


def test_fit_order():
    e = np.array([0.2, 0.1, 0.05])
    assert fit_order(e, 3 * e**2) == pytest.approx(2.0)
    assert np.isnan(fit_order(e, np.zeros(3)))

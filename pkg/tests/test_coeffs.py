import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast.coeffs import (assemble_matrices, compute_coefficients, e_and_r, flux_for_xi, g_inner,
                             schur_gap, schur_sweep, solve_omega, solve_psi, solve_xi_canonical)
from slowfast.equilibrium import solve_equilibrium
from slowfast.linops import assemble_linearized
from slowfast.model import ModelSpec

FIXTURES = ["abp2", "vm", "act", "custom"]


def test_free_abp_cell_functions(abp2):
    spec, eq, ops, c = abp2
    th = spec.grid.nodes
    psi = np.stack([np.cos(th), np.sin(th)])
    assert np.max(np.abs(c.psi - psi)) < 1e-10
    assert np.max(np.abs(c.omega - psi)) < 1e-10
    assert np.max(np.abs(c.xi - psi)) < 1e-10
    assert np.max(np.abs(c.Dmat - 0.5 * np.eye(2))) < 1e-10
    assert np.max(np.abs(c.Sigma - 0.5 * np.eye(2))) < 1e-10


@pytest.mark.parametrize("fixture", FIXTURES)
def test_cell_residuals_and_normalization(fixture, request):
    spec, eq, ops, c = request.getfixturevalue(fixture)
    for key in ("psi", "omega", "xi"):
        assert c.residuals[key] < 1e-9
    assert c.residuals["duality"] < 1e-9
    g = spec.grid
    for arr in (c.psi, c.omega, c.xi):
        assert np.max(np.abs(g.quad(eq.G * arr))) < 1e-12
    # weighted mean of the flux potential
    assert np.max(np.abs(g.quad(c.flux_potential / (spec.Gamma_s * eq.G)))) < 1e-10


@pytest.mark.parametrize("fixture", FIXTURES)
def test_matrix_properties(fixture, request):
    spec, eq, ops, c = request.getfixturevalue(fixture)
    assert np.allclose(c.Dmat, c.Dmat.T, atol=0)
    assert np.min(np.linalg.eigvalsh(c.Sigma)) > 0
    assert np.min(np.linalg.eigvalsh(c.Rmat)) > -1e-10
    assert np.min(np.linalg.eigvalsh(c.Dmat)) > 0
    assert np.linalg.norm(c.Emat - c.Rmat) < 1e-8
    assert np.linalg.norm(c.Rmat - c.Sigma) < 1e-8


@pytest.mark.parametrize("fixture", FIXTURES)
def test_D_versus_dissipativity(fixture, request):
    spec, eq, ops, c = request.getfixturevalue(fixture)
    w = spec.grid.quad_weight
    for x in np.eye(spec.n):
        gpsi = eq.G * (x @ c.psi)
        form = -w * np.sum(ops.L @ gpsi * gpsi / eq.G)
        assert form == pytest.approx(x @ c.Dmat @ x, rel=1e-8)
        assert x @ c.Dmat @ x >= ops.kappa_margin * (x @ c.Sigma @ x) - 1e-8


@pytest.mark.parametrize("fixture", FIXTURES)
def test_psi_shift_invariance(fixture, request):
    spec, eq, ops, c = request.getfixturevalue(fixture)
    shift = np.arange(1, spec.n + 1, dtype=float)[:, None] * 2.5
    s = assemble_matrices(eq, spec, c.psi + shift, c.omega, c.xi, c.flux_potential)
    assert np.max(np.abs(s.Dmat - c.Dmat)) < 1e-10
    assert np.max(np.abs(s.Sigma - c.Sigma)) < 1e-10


def test_constant_velocity_gives_zero():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = ModelSpec(M=32, U=np.cos, V=(lambda t: np.full_like(t, 0.7),))
        eq = solve_equilibrium(spec)
        ops = assemble_linearized(spec, eq)
    c = compute_coefficients(spec, eq, ops)
    for arr in (c.psi, c.omega, c.xi, c.flux_potential, c.Dmat, c.Sigma, c.Emat, c.Rmat):
        assert np.max(np.abs(arr)) < 1e-12


def test_schur_examples(abp2, custom):
    spec, eq, ops, c = abp2
    rep = schur_sweep(eq, spec, ops, trials=32, seed=0, coeffs=c)
    assert rep.min_eig_gap >= -1e-10
    assert rep.equality_residual < 1e-8
    # xi = 0
    E, R = e_and_r(eq, spec, np.zeros((2, spec.M)), np.zeros((2, spec.M)))
    gap = schur_gap(c.Sigma, E, R)
    assert np.min(np.linalg.eigvalsh(gap)) == pytest.approx(np.min(np.linalg.eigvalsh(c.Sigma)))
    spec, eq, ops, c = custom
    assert schur_sweep(eq, spec, ops, trials=16, seed=1, coeffs=c).min_eig_gap >= -1e-10


def test_flux_for_canonical_xi_matches(custom):
    spec, eq, ops, c = custom
    flux = flux_for_xi(ops, eq, spec, c.xi)
    assert np.max(np.abs(flux - c.flux_potential)) < 1e-8 * np.max(np.abs(c.flux_potential))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_sigma_quadratic_form(seed):
    # x . sigma x equals the weighted Dirichlet energy of x . psi
    from slowfast.model import active_2d

    spec = active_2d(M=32, coupling=0.2)
    eq = solve_equilibrium(spec)
    ops = assemble_linearized(spec, eq)
    c = compute_coefficients(spec, eq, ops)
    x = np.random.default_rng(seed).standard_normal(2)
    dpsi = spec.grid.d_theta(x @ c.psi)
    energy = spec.grid.quad(eq.G * spec.Gamma_s * dpsi**2)
    assert x @ c.Sigma @ x == pytest.approx(energy, rel=1e-10)


def test_individual_solvers(vm):
    spec, eq, ops, c = vm
    psi = solve_psi(ops, eq, spec)
    omega = solve_omega(ops, eq, spec)
    xi, flux = solve_xi_canonical(ops, eq, spec, psi)
    assert np.allclose(psi, c.psi) and np.allclose(omega, c.omega) and np.allclose(xi, c.xi)
    Vb = spec.Vbar(eq.G)
    assert np.allclose(g_inner(eq.G, psi, Vb, spec.grid.quad_weight),
                       g_inner(eq.G, Vb, omega, spec.grid.quad_weight), atol=1e-9)
    psi0, *_ = solve_xi_canonical(ops, eq, spec, np.zeros_like(psi))
    assert np.max(np.abs(psi0)) < 1e-14

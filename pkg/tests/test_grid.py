import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast.errors import NonZeroMean, SingularWeight
from slowfast.grid import AngularGrid, SpatialGrid


def trig_field(rng, M, modes=6):
    th = AngularGrid(M).nodes
    k = np.arange(1, modes + 1)[:, None]
    a, b = rng.standard_normal((2, modes, 1))
    return (a * np.cos(k * th) + b * np.sin(k * th)).sum(axis=0)


def test_angular_grid_validation():
    with pytest.raises(ValueError):
        AngularGrid(15)
    with pytest.raises(ValueError):
        AngularGrid(8)


def test_angular_quadrature_and_constant():
    g = AngularGrid(64)
    assert abs(g.quad(np.ones(64)) - 2 * np.pi) < 1e-14
    assert np.max(np.abs(g.d_theta(np.ones(64)))) < 1e-14
    assert g.nodes[0] == -np.pi and g.quad_weight == 2 * np.pi / 64


@pytest.mark.parametrize("deg", range(0, 32))
def test_quadrature_exact_for_trig_polynomials(deg):
    g = AngularGrid(64)
    exact = 2 * np.pi if deg == 0 else 0.0
    assert abs(g.quad(np.cos(deg * g.nodes)) - exact) < 1e-12
    assert abs(g.quad(np.sin(deg * g.nodes))) < 1e-12


def test_d_theta_examples():
    g = AngularGrid(64)
    th = g.nodes
    assert np.max(np.abs(g.d_theta(np.sin(th)) - np.cos(th))) < 1e-12
    assert np.max(np.abs(g.d_theta(np.cos(3 * th)) + 3 * np.sin(3 * th))) < 1e-12


def test_d1_matrix_matches_fft_and_is_skew(rng):
    g = AngularGrid(32)
    f = rng.standard_normal(32)
    assert np.allclose(g.D1 @ f, g.d_theta(f), atol=1e-12)
    assert np.max(np.abs(g.D1 + g.D1.T)) < 1e-12
    assert np.max(np.abs(g.D1 @ g.nyquist)) < 1e-12


def test_antiderivative():
    g = AngularGrid(64)
    th = g.nodes
    assert np.max(np.abs(g.antiderivative_theta(np.cos(th)) - np.sin(th))) < 1e-12
    assert np.max(np.abs(g.antiderivative_theta(np.zeros(64)))) == 0.0
    with pytest.raises(NonZeroMean):
        g.antiderivative_theta(np.ones(64))


def test_antiderivative_round_trip(rng):
    g = AngularGrid(128)
    f = trig_field(rng, 128)
    C = g.antiderivative_theta(f)
    assert abs(g.quad(C)) < 1e-13
    assert np.max(np.abs(g.d_theta(C) - f)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_discrete_integration_by_parts(seed):
    rng = np.random.default_rng(seed)
    g = AngularGrid(64)
    a = rng.standard_normal(64)
    a -= a.mean()
    h = rng.standard_normal(64)
    lhs = g.quad(h * g.d_theta(a))
    rhs = -g.quad(g.d_theta(h) * a)
    assert abs(lhs - rhs) < 1e-10


def test_spatial_grid_basics():
    sg = SpatialGrid((2.0, 3.0), (16, 24))
    assert abs(sg.quad(np.ones(sg.counts)) - 6.0) < 1e-13
    assert np.max(np.abs(sg.grad_q(np.full(sg.counts, 2.5)))) < 1e-13


def test_spatial_derivatives_1d():
    L = 3.0
    sg = SpatialGrid((L,), (32,))
    q = sg.nodes[0]
    f = np.sin(2 * np.pi * q / L)
    assert np.max(np.abs(sg.grad_q(f)[0] - (2 * np.pi / L) * np.cos(2 * np.pi * q / L))) < 1e-12
    assert np.max(np.abs(sg.div_q(sg.grad_q(f)) + (2 * np.pi / L) ** 2 * f)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_div_grad_is_laplacian(seed):
    rng = np.random.default_rng(seed)
    sg = SpatialGrid((1.0, 2.0), (16, 12))
    f = sg.project_resolved(rng.standard_normal(sg.counts))
    assert np.max(np.abs(sg.div_q(sg.grad_q(f)) - sg.laplacian(f))) < 1e-9 * max(1, np.max(np.abs(sg.laplacian(f))))


def test_shift_translates():
    sg = SpatialGrid((2 * np.pi,), (32,))
    q = sg.nodes[0]
    assert np.max(np.abs(sg.shift(np.cos(q), 0.3) - np.cos(q + 0.3))) < 1e-12


def test_weighted_poisson_examples():
    L = 2.0
    sg = SpatialGrid((L,), (32,))
    q = sg.nodes[0]
    k = 2 * np.pi / L
    rhs = k**2 * np.sin(k * q)
    phi = sg.solve_weighted_poisson_q(1.0, rhs)
    assert np.max(np.abs(phi - np.sin(k * q))) < 1e-12
    assert np.max(np.abs(sg.solve_weighted_poisson_q(1.0, np.zeros(32)))) == 0.0
    assert np.max(np.abs(sg.solve_weighted_poisson_q(2.0, rhs) - 0.5 * phi)) < 1e-12


def test_weighted_poisson_variable_matrix_weight(rng):
    sg = SpatialGrid((2 * np.pi, 2 * np.pi), (24, 24))
    q1, q2 = sg.nodes
    chi = np.array([[1.5 + 0.5 * np.cos(q1), 0.2 * np.sin(q2)], [0.2 * np.sin(q2), 1.0 + 0.3 * np.sin(q1 + q2)]])
    rhs = sg.project_resolved(rng.standard_normal(sg.counts))
    rhs -= sg.mean(rhs)
    phi = sg.solve_weighted_poisson_q(chi, rhs)
    flux = np.einsum("ab...,b...->a...", chi, sg.grad_q(phi))
    res = sg.project_resolved(sg.div_q(flux)) + rhs
    assert np.max(np.abs(res)) < 1e-9 * np.max(np.abs(rhs))
    assert abs(sg.mean(phi)) < 1e-12


def test_weighted_poisson_errors():
    sg = SpatialGrid((1.0,), (16,))
    with pytest.raises(NonZeroMean):
        sg.solve_weighted_poisson_q(1.0, np.ones(16))
    with pytest.raises(SingularWeight):
        sg.solve_weighted_poisson_q(np.linspace(-1, 1, 16), np.sin(2 * np.pi * sg.nodes[0]))

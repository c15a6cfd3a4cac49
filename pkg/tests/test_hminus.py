import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast.grid import SpatialGrid
from slowfast.hminus import (INF, fiber_norm_batch, fiber_norm_sq, fiber_norm_sq_sup, spatial_weighted_norm,
                             spatial_weighted_norm_sq)

M = 64
TH = -np.pi + 2 * np.pi * np.arange(M) / M


def random_fiber(rng, modes=8):
    k = np.arange(1, modes + 1)[:, None]
    a, b = rng.standard_normal((2, modes, 1)) / k
    return (a * np.cos(k * TH) + b * np.sin(k * TH)).sum(axis=0)


def random_weight(rng):
    k = np.arange(1, 4)[:, None]
    return np.exp(0.5 * (rng.standard_normal((3, 1)) * np.cos(k * TH)).sum(axis=0))


def test_fiber_examples():
    r = fiber_norm_sq(np.cos(TH), 1.0)
    assert abs(r.value - np.pi) < 1e-10
    assert np.max(np.abs(r.control - np.sin(TH))) < 1e-12
    assert fiber_norm_sq(np.zeros(M), 1.0).value == 0.0
    assert fiber_norm_sq(np.cos(TH), 2.0).value == pytest.approx(np.pi / 2, rel=1e-12)


def test_fiber_infinite_on_mass():
    r = fiber_norm_sq(np.cos(TH) + 0.1, 1.0)
    assert r.infinite and r.value == INF and math.isinf(fiber_norm_sq_sup(np.cos(TH) + 0.1))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_fiber_duality(seed):
    rng = np.random.default_rng(seed)
    g, h = random_fiber(rng), random_weight(rng)
    r = fiber_norm_sq(g, h)
    sup = fiber_norm_sq_sup(g, h)
    assert abs(r.value - sup) <= 1e-8 * r.value
    # the control satisfies the constraint and the multiplier attains the sup
    grid_d = np.fft.irfft(1j * np.r_[np.arange(M // 2), 0] * np.fft.rfft(r.control), n=M)
    assert np.max(np.abs(grid_d - g)) < 1e-10 * max(1, np.max(np.abs(g)))
    phi = r.multiplier
    dphi = np.fft.irfft(1j * np.r_[np.arange(M // 2), 0] * np.fft.rfft(phi), n=M)
    w = 2 * np.pi / M
    assert 2 * w * np.sum(g * phi) - w * np.sum(h * dphi**2) == pytest.approx(r.value, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), lam=st.floats(-10, 10).filter(lambda x: abs(x) > 1e-3))
def test_fiber_homogeneity_and_monotonicity(seed, lam):
    rng = np.random.default_rng(seed)
    g, h = random_fiber(rng), random_weight(rng)
    v = fiber_norm_sq(g, h).value
    assert fiber_norm_sq(lam * g, h).value == pytest.approx(lam**2 * v, rel=1e-10)
    assert fiber_norm_sq(g, h * (1 + np.abs(random_fiber(rng)))).value <= v * (1 + 1e-12)


def test_fiber_batch_matches_single(rng):
    gs = np.stack([random_fiber(rng) for _ in range(5)])
    hs = np.stack([random_weight(rng) for _ in range(5)])
    gs[2] += 0.3
    vals = fiber_norm_batch(gs, hs)
    for g, h, v in zip(gs, hs, vals):
        assert v == fiber_norm_sq(g, h).value or (math.isinf(v) and fiber_norm_sq(g, h).infinite)


def test_spatial_single_mode():
    L = 3.0
    sg = SpatialGrid((L,), (32,))
    g = np.sin(2 * np.pi * sg.nodes[0] / L)
    assert spatial_weighted_norm_sq(g, 1.0, sg) == pytest.approx(L / 2 * (L / (2 * np.pi)) ** 2, rel=1e-12)
    assert spatial_weighted_norm_sq(np.zeros(32), 1.0, sg) == 0.0
    assert spatial_weighted_norm_sq(g, 4.0, sg) == pytest.approx(L / 8 * (L / (2 * np.pi)) ** 2, rel=1e-12)
    assert spatial_weighted_norm_sq(g + 1, 1.0, sg) == INF


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_spatial_duality_matrix_weight(seed):
    rng = np.random.default_rng(seed)
    sg = SpatialGrid((2 * np.pi, 4.0), (16, 16))
    q1, q2 = sg.nodes
    c = rng.standard_normal(6)
    g = c[0] * np.cos(q1) + c[1] * np.sin(np.pi * q2 / 2) + c[2] * np.cos(q1 - np.pi * q2)
    chi = np.array([[1.2 + 0.4 * np.cos(q1 + c[3]), 0.3 * np.sin(q2 + c[4])],
                    [0.3 * np.sin(q2 + c[4]), 1.0 + 0.4 * np.sin(q1 + c[5])]])
    r = spatial_weighted_norm(g, chi, sg)
    assert abs(r.value - r.inf_value) <= 1e-8 * r.value
    # homogeneity and weight scaling
    assert spatial_weighted_norm_sq(2 * g, chi, sg) == pytest.approx(4 * r.value, rel=1e-10)
    assert spatial_weighted_norm_sq(g, 2 * chi, sg) == pytest.approx(r.value / 2, rel=1e-10)


def test_spatial_mean_scale_argument():
    sg = SpatialGrid((1.0,), (16,))
    g = np.full(16, 1e-12)
    assert spatial_weighted_norm_sq(g, 1.0, sg) == INF
    assert spatial_weighted_norm_sq(g, 1.0, sg, scale=100.0) == 0.0

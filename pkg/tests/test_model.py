import warnings

import numpy as np
import pytest

from slowfast.errors import DegenerateVelocity, ModelError
from slowfast.model import PRESETS, ModelSpec, active_2d, convolve_F, free_abp, pair_force_kernel, von_mises


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_valid(name):
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateVelocity)
        spec = PRESETS[name]()
    assert spec.nondegenerate
    assert np.min(spec.Gamma_s) > 0


def test_pair_force_kernel_cosine():
    spec = active_2d(M=64)
    th = spec.grid.nodes
    exact = -np.sin(th[:, None] - th[None, :])
    assert np.max(np.abs(pair_force_kernel(spec) - exact)) < 1e-12
    assert np.max(np.abs(active_2d(M=64, coupling=2.0).F_kernel - 2 * spec.F_kernel)) < 1e-14
    assert not np.any(free_abp().F_kernel)


def test_convolve_F_examples():
    spec = active_2d(M=64)
    th = spec.grid.nodes
    assert np.max(np.abs(convolve_F(spec, np.full(64, 1 / (2 * np.pi))))) < 1e-14
    assert np.max(np.abs(convolve_F(spec, np.zeros(64)))) == 0.0
    delta = np.zeros(64)
    j0 = np.argmin(np.abs(th))
    delta[j0] = 1 / spec.grid.quad_weight
    assert np.max(np.abs(convolve_F(spec, delta) + np.sin(th))) < 1e-12


def test_convolve_F_linear_and_bounded(rng):
    spec = active_2d(M=64)
    a, b = rng.standard_normal((2, 64))
    assert np.allclose(convolve_F(spec, 2 * a - b), 2 * convolve_F(spec, a) - convolve_F(spec, b), atol=1e-13)
    bound = np.max(np.abs(spec.F_kernel)) * spec.grid.quad(np.abs(a))
    assert np.max(np.abs(convolve_F(spec, a))) <= bound + 1e-12


def test_even_kernel_maps_even_to_odd():
    spec = active_2d(M=64)
    G = np.exp(np.cos(spec.grid.nodes))
    out = convolve_F(spec, G)
    assert np.max(np.abs(out + spec.grid.reflect(out))) < 1e-12


def test_model_errors():
    with pytest.raises(ModelError, match="Gamma"):
        ModelSpec(M=32, Gamma=lambda t: np.cos(t), V=(np.cos,))
    with pytest.raises(ModelError, match="symmetric"):
        ModelSpec(M=32, W=lambda a, b: np.sin(a), V=(np.cos,))
    with pytest.warns(DegenerateVelocity):
        ModelSpec(M=32, V=(np.cos, np.cos))


def test_von_mises_samples():
    spec = von_mises(M=32)
    assert np.allclose(spec.U_s, np.cos(spec.grid.nodes))
    assert np.allclose(spec.dU, -np.sin(spec.grid.nodes), atol=1e-12)

"""Local-equilibrium angular density G, the zero-flux solution of the fast dynamics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NonContractive, NonEquilibriumModel
from .model import ModelSpec, convolve_F

TOL_EQ = 1e-9
TOL_ITER = 1e-12

# Lower/upper constants from the theta_*, theta^* argument: some node has
# G <= 1/pi and some node has G >= 1/(4 pi).
K_UPPER = 1.0 / np.pi
K_LOWER = 1.0 / (4.0 * np.pi)


@dataclass(frozen=True)
class EquilibriumState:
    G: np.ndarray
    H: np.ndarray
    residual: float
    iterations: int
    contraction_estimate: float
    fixed_point_residual: float
    drift_mean: float
    bounds: dict

    @property
    def mass(self) -> float:
        return float(np.sum(self.G) * 2 * np.pi / self.G.size)


def zero_flux_residual(spec: ModelSpec, G) -> float:
    """Sup norm of [dU + F(G)] G + dG."""
    g = spec.grid
    return float(np.max(np.abs((spec.dU + convolve_F(spec, G)) * G + g.d_theta(G))))


def _potential_gradient(spec, G):
    a = spec.dU + convolve_F(spec, G)
    return a, float(spec.grid.quad(a) / (2 * np.pi))


def fixed_point_map(spec: ModelSpec, G):
    """T(G) = exp(-H) / Z with dH = dU + F(G); also returns H.

    A nonzero mean of dU + F(G) (non-gradient force) is removed before
    integrating, so T stays defined; callers report it.
    """
    grid = spec.grid
    a, mean = _potential_gradient(spec, G)
    H = grid.antiderivative_theta(a - mean)
    H = H - np.min(H)
    T = np.exp(-H)
    Z = grid.quad(T)
    return T / Z, H + np.log(Z)


def density_bounds(spec: ModelSpec) -> dict:
    C = float(np.max(np.abs(spec.dU)) + np.max(np.abs(spec.F_kernel)))
    dlogG = float(np.max(np.abs(spec.grid.d_theta(np.log(spec.Gamma_s)))))
    expo = 2 * np.pi * (C + dlogG)
    return {"upper": K_UPPER * np.exp(expo), "lower": K_LOWER * np.exp(-expo), "C": C}


def _lipschitz_estimate(spec, G, rng, probes=12):
    """Power iteration on the finite-difference Jacobian of T at G (mass-zero directions)."""
    grid = spec.grid
    if not spec.has_interaction:
        return 0.0
    d = rng.standard_normal(spec.M)
    d = grid.drop_nyquist(d - grid.quad(d) / (2 * np.pi))
    h = 1e-6
    TG, _ = fixed_point_map(spec, G)
    ratio = 0.0
    for _ in range(probes):
        d = d / np.max(np.abs(d))
        Td, _ = fixed_point_map(spec, G + h * d)
        jd = (Td - TG) / h
        ratio = float(np.max(np.abs(jd)))
        if ratio == 0.0:
            break
        d = jd
    return ratio


def solve_equilibrium(spec: ModelSpec, G0=None, alpha=0.5, max_iter=10_000,
                      tol_iter=TOL_ITER, tol_eq=TOL_EQ, seed=0) -> EquilibriumState:
    """Damped fixed-point iteration G <- (1 - alpha) G + alpha T(G)."""
    grid = spec.grid
    G = np.full(spec.M, 1 / (2 * np.pi)) if G0 is None else np.asarray(G0, dtype=float)
    G = G / grid.quad(G)
    prev_step = np.inf
    ratios = []
    it = 0
    for it in range(1, max_iter + 1):
        TG, _ = fixed_point_map(spec, G)
        step = float(np.max(np.abs(TG - G)))
        if step <= tol_iter:
            G = TG
            break
        if step > prev_step and alpha > 1e-3:
            alpha *= 0.5
        if np.isfinite(prev_step) and prev_step > 0:
            ratios.append(step / prev_step)
        prev_step = step
        G = (1 - alpha) * G + alpha * TG
    else:
        raise NoConvergence(f"equilibrium iteration did not converge in {max_iter} steps")

    TG, H = fixed_point_map(spec, G)
    G = TG
    _, drift_mean = _potential_gradient(spec, G)
    if abs(drift_mean) > 1e-10:
        warnings.warn(f"{spec.name}: angular force has mean {drift_mean:.3e}; not a gradient model",
                      NonEquilibriumModel, stacklevel=2)
    contraction = _lipschitz_estimate(spec, G, np.random.default_rng(seed))
    if contraction >= 1.0:
        warnings.warn(f"{spec.name}: fixed-point map has Lipschitz estimate {contraction:.3f} >= 1",
                      NonContractive, stacklevel=2)
    resid = zero_flux_residual(spec, G)
    Tagain, _ = fixed_point_map(spec, G)
    fp_resid = float(np.max(np.abs(Tagain - G)))
    if resid > tol_eq and abs(drift_mean) <= 1e-10:
        raise NoConvergence(f"zero-flux residual {resid:.3e} exceeds {tol_eq:.1e}")
    return EquilibriumState(G=G, H=H, residual=resid, iterations=it,
                            contraction_estimate=contraction, fixed_point_residual=fp_resid,
                            drift_mean=drift_mean, bounds=density_bounds(spec))


@dataclass(frozen=True)
class UniquenessReport:
    max_distance: float
    states: list
    contraction_estimate: float
    non_contractive: bool


def uniqueness_probe(spec: ModelSpec, trials=8, seed=0, modes=4) -> UniquenessReport:
    """Solve from randomized positive initial densities and compare the limits."""
    rng = np.random.default_rng(seed)
    grid = spec.grid
    states = []
    for _ in range(trials):
        coef = rng.standard_normal((modes, 2)) * 0.5
        k = np.arange(1, modes + 1)[:, None]
        logG = coef[:, :1] * np.cos(k * grid.nodes) + coef[:, 1:] * np.sin(k * grid.nodes)
        G0 = np.exp(logG.sum(axis=0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonContractive)
            states.append(solve_equilibrium(spec, G0=G0, seed=int(rng.integers(2**31))))
    dist = 0.0
    for i in range(trials):
        for j in range(i + 1, trials):
            dist = max(dist, float(np.max(np.abs(states[i].G - states[j].G))))
    est = max(s.contraction_estimate for s in states)
    return UniquenessReport(max_distance=dist, states=states, contraction_estimate=est,
                            non_contractive=est >= 1.0)

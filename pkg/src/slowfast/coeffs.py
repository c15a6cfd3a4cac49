"""Cell problems and the effective transport matrices D, sigma, E, R."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumState, solve_equilibrium
from .errors import Unsolvable
from .linops import LinearizedOps, assemble_linearized
from .model import ModelSpec

TOL_CELL = 1e-9
TOL_PSD = 1e-10


def g_inner(G, a, b, w):
    """<a_k, b_l>_G for stacks a (n, M), b (m, M); returns (n, m)."""
    return w * (np.atleast_2d(a) * G) @ np.atleast_2d(b).T


@dataclass(frozen=True)
class CoefficientSet:
    psi: np.ndarray
    omega: np.ndarray
    xi: np.ndarray
    flux_potential: np.ndarray
    Dmat: np.ndarray
    Sigma: np.ndarray
    Emat: np.ndarray
    Rmat: np.ndarray
    residuals: dict


@dataclass(frozen=True)
class SchurReport:
    min_eig_gap: float
    equality_residual: float
    gaps: np.ndarray


def _vbar(spec, eq):
    Vb = spec.Vbar(eq.G)
    mean = spec.grid.quad(eq.G * Vb)
    if np.any(np.abs(mean) > TOL_CELL * max(1.0, float(np.max(np.abs(Vb), initial=0.0)))):
        raise Unsolvable(f"<Vbar>_G = {mean} is not zero")
    return Vb


def solve_psi(ops: LinearizedOps, eq: EquilibriumState, spec: ModelSpec):
    """Ladj psi_k = -Vbar_k with <psi_k>_G = 0; shape (n, M)."""
    Vb = _vbar(spec, eq)
    if Vb.size == 0:
        return Vb.copy()
    return ops.solve(-Vb, adjoint=True)


def solve_omega(ops: LinearizedOps, eq: EquilibriumState, spec: ModelSpec):
    """L(G omega_k) = -G Vbar_k with <omega_k>_G = 0."""
    Vb = _vbar(spec, eq)
    if Vb.size == 0:
        return Vb.copy()
    return ops.solve(-eq.G * Vb) / eq.G


def normalize_flux(flux, eq: EquilibriumState, spec: ModelSpec):
    """Shift so that the weighted mean of flux / (Gamma G) vanishes."""
    grid = spec.grid
    wgt = 1.0 / (spec.Gamma_s * eq.G)
    c = grid.quad(flux * wgt) / grid.quad(wgt)
    return flux - np.asarray(c)[..., None]


def solve_xi_canonical(ops: LinearizedOps, eq: EquilibriumState, spec: ModelSpec, psi):
    """L(G xi_k) = d(Gamma G dpsi_k); flux_k = Gamma G dpsi_k."""
    grid = spec.grid
    psi = np.atleast_2d(psi)
    if psi.size == 0:
        return psi.copy(), psi.copy()
    flux = spec.Gamma_s * eq.G * grid.d_theta(psi)
    rhs = grid.d_theta(flux)
    xi = ops.solve(rhs) / eq.G
    return xi, normalize_flux(flux, eq, spec)


def flux_for_xi(ops: LinearizedOps, eq: EquilibriumState, spec: ModelSpec, xi):
    """Flux potential with d(flux) = L(G xi), normalized."""
    grid = spec.grid
    y = np.atleast_2d(xi) * eq.G
    Ly = y @ ops.L.T
    return normalize_flux(grid.antiderivative_theta(Ly, tol_mean=1e-8), eq, spec)


def e_and_r(eq, spec, xi, flux):
    grid = spec.grid
    w, G = grid.quad_weight, eq.G
    E = g_inner(G, spec.Vbar(G), xi, w)
    R = w * (flux / (spec.Gamma_s * G)) @ flux.T
    return E, 0.5 * (R + R.T)


def assemble_matrices(eq: EquilibriumState, spec: ModelSpec, psi, omega, xi, flux,
                      ops: LinearizedOps | None = None) -> CoefficientSet:
    grid = spec.grid
    w, G = grid.quad_weight, eq.G
    Vb = spec.Vbar(G)
    n = spec.n
    if n == 0:
        z = np.zeros((0, 0))
        return CoefficientSet(psi, omega, xi, flux, z, z, z, z, {})
    P = g_inner(G, psi, Vb, w)
    D = 0.5 * (P + P.T)
    dpsi = grid.d_theta(psi)
    S = g_inner(G, dpsi * spec.Gamma_s, dpsi, w)
    S = 0.5 * (S + S.T)
    E, R = e_and_r(eq, spec, xi, flux)
    residuals = {}
    if ops is not None:
        residuals = {
            "psi": ops.residual(psi, -Vb, adjoint=True),
            "omega": ops.residual(omega * G, -G * Vb),
            "xi": ops.residual(xi * G, grid.d_theta(flux)),
            "duality": float(np.max(np.abs(g_inner(G, psi, Vb, w) - g_inner(G, Vb, omega, w)))),
        }
    return CoefficientSet(psi=psi, omega=omega, xi=xi, flux_potential=flux, Dmat=D, Sigma=S,
                          Emat=E, Rmat=R, residuals=residuals)


def compute_coefficients(spec: ModelSpec, eq: EquilibriumState | None = None,
                         ops: LinearizedOps | None = None) -> CoefficientSet:
    eq = solve_equilibrium(spec) if eq is None else eq
    ops = assemble_linearized(spec, eq) if ops is None else ops
    psi = solve_psi(ops, eq, spec)
    omega = solve_omega(ops, eq, spec)
    xi, flux = solve_xi_canonical(ops, eq, spec, psi)
    return assemble_matrices(eq, spec, psi, omega, xi, flux, ops=ops)


def schur_gap(Sigma, E, R):
    Rp = np.linalg.pinv(R, rcond=1e-12, hermitian=True) if np.any(R) else np.zeros_like(R)
    S = Sigma - E @ Rp @ E.T
    S = 0.5 * (S + S.T)
    return S


def random_xi(spec: ModelSpec, eq: EquilibriumState, rng, modes=8):
    """Truncated Fourier series with standard normal coefficients, <xi>_G = 0."""
    grid = spec.grid
    k = np.arange(1, modes + 1)[:, None]
    a = rng.standard_normal((spec.n, modes))
    b = rng.standard_normal((spec.n, modes))
    c = rng.standard_normal((spec.n, 1))
    xi = c + a @ np.cos(k * grid.nodes) + b @ np.sin(k * grid.nodes)
    return xi - grid.quad(eq.G * xi)[:, None]


def schur_sweep(eq: EquilibriumState, spec: ModelSpec, ops: LinearizedOps, trials=32,
                seed=0, coeffs: CoefficientSet | None = None) -> SchurReport:
    coeffs = compute_coefficients(spec, eq, ops) if coeffs is None else coeffs
    Sigma = coeffs.Sigma
    eq_res = float(np.linalg.norm(schur_gap(Sigma, coeffs.Emat, coeffs.Rmat)))
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(trials):
        xi = random_xi(spec, eq, rng)
        flux = flux_for_xi(ops, eq, spec, xi)
        E, R = e_and_r(eq, spec, xi, flux)
        gaps.append(float(np.min(np.linalg.eigvalsh(schur_gap(Sigma, E, R)))))
    gaps = np.array(gaps)
    return SchurReport(min_eig_gap=float(np.min(gaps)) if trials else np.nan,
                       equality_residual=eq_res, gaps=gaps)

"""Kinetic operator D_f, its linearization L_G at equilibrium, the adjoint, and T_0.

L_G is assembled in the Gibbs form

    L g = d( Gamma G d(g / G) ) + d( Gamma G [F(g) - F(G) quad(g)] ),

which equals the plain linearization at an equilibrium but gives L G = 0 and
Ladj 1 = 0 to rounding on the grid. ``linearized_plain`` builds the plain
form for cross-checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .equilibrium import EquilibriumState
from .errors import DegenerateDirichletForm, DissipativityNotCertified, Unsolvable, VacuousDensity
from .grid import SpatialGrid
from .model import ModelSpec, convolve_F

TOL_OP = 1e-8
EPS_MASS = 1e-12


def apply_D_f(spec: ModelSpec, f, eps_mass=EPS_MASS):
    """D_f(f) = d( Gamma [dU + F(f)/Pi(f)] f + Gamma df ) along the last axis."""
    grid = spec.grid
    f = np.asarray(f, dtype=float)
    mass = grid.quad(f)
    if np.any(mass <= eps_mass):
        raise VacuousDensity(f"angular mass {float(np.min(mass)):.3e} <= {eps_mass:.1e}")
    drift = spec.dU + convolve_F(spec, f) / np.asarray(mass)[..., None]
    return grid.d_theta(spec.Gamma_s * (drift * f + grid.d_theta(f)))


def _nyquist_free_basis(grid, with_mass=False):
    """Orthonormal basis of {g : g . nyquist = 0 (and sum g = 0)}."""
    rows = [grid.nyquist]
    if with_mass:
        rows.append(np.ones(grid.M))
    C = np.array(rows)
    return sla.null_space(C)


def linearized_gibbs(spec: ModelSpec, G):
    grid = spec.grid
    D1, w = grid.D1, grid.quad_weight
    GG = spec.Gamma_s * G
    FG = convolve_F(spec, G)
    K = w * spec.F_kernel - np.outer(FG, w * np.ones(spec.M))
    L = D1 @ (GG[:, None] * D1) / G[None, :] + D1 @ (GG[:, None] * K)
    Kt = w * spec.F_kernel.T - np.outer(w * np.ones(spec.M), FG)
    Ladj = (D1 / G[:, None]) @ (GG[:, None] * D1) - Kt @ (GG[:, None] * D1)
    return L, Ladj


def linearized_plain(spec: ModelSpec, G):
    """Linearization of D_f at G without using the equilibrium relation."""
    grid = spec.grid
    D1, w = grid.D1, grid.quad_weight
    Gam = spec.Gamma_s
    FG = convolve_F(spec, G)
    inner = np.diag(Gam * (spec.dU + FG)) + Gam[:, None] * D1
    inner = inner + (Gam * G)[:, None] * (w * spec.F_kernel - np.outer(FG, w * np.ones(spec.M)))
    return D1 @ inner


@dataclass(frozen=True)
class LinearizedOps:
    L: np.ndarray
    Ladj: np.ndarray
    Pi_G: np.ndarray
    mean_projector: np.ndarray
    kappa_margin: float
    G: np.ndarray
    quad_weight: float
    kernel_dims: tuple
    kernel_residuals: dict
    fd_residual: float
    tol_op: float
    _nyq: np.ndarray = field(repr=False)

    def solve(self, b, adjoint=False, norm_row=None, check=True, tol=1e-9):
        """Solve L x = b (or Ladj x = b) with the kernel deflated.

        ``norm_row`` fixes the kernel component (default: sum x = 0 for L,
        sum G x = 0 for Ladj). The right-hand side must be orthogonal to the
        kernel of the transposed operator.
        """
        A = self.Ladj if adjoint else self.L
        b = np.asarray(b, dtype=float)
        w = self.quad_weight
        if adjoint:
            solv = w * np.sum(self.G * b, axis=-1)
            norm_row = w * self.G if norm_row is None else norm_row
        else:
            solv = w * np.sum(b, axis=-1)
            norm_row = w * np.ones_like(self.G) if norm_row is None else norm_row
        scale = max(float(w * np.max(np.sum(np.abs(b), axis=-1))), np.finfo(float).tiny)
        if check and np.max(np.abs(solv)) > tol * scale:
            raise Unsolvable(f"right-hand side not in the range (defect {float(np.max(np.abs(solv))):.3e})")
        # remove the unreachable Nyquist content of b; range(L) excludes it
        bb = b - np.tensordot(b, self._nyq, axes=(-1, 0))[..., None] * self._nyq / self._nyq.size
        A_ext = np.vstack([A, norm_row, self._nyq])
        B = np.atleast_2d(bb)
        rhs = np.hstack([B, np.zeros((B.shape[0], 2))]).T
        x = sla.lstsq(A_ext, rhs, lapack_driver="gelsd")[0].T
        return x.reshape(b.shape)

    def residual(self, x, b, adjoint=False):
        A = self.Ladj if adjoint else self.L
        r = np.asarray(x) @ A.T - b
        r = r - np.tensordot(r, self._nyq, axes=(-1, 0))[..., None] * self._nyq / self._nyq.size
        return float(np.max(np.abs(r)))


def assemble_linearized(spec: ModelSpec, eq: EquilibriumState, tol_op=TOL_OP, seed=0,
                        warn=True) -> LinearizedOps:
    grid = spec.grid
    G = eq.G
    w = grid.quad_weight
    L, Ladj = linearized_gibbs(spec, G)
    opnorm = max(1.0, float(np.linalg.norm(L, 2)))
    tol = tol_op * opnorm

    res = {
        "L_G": float(np.max(np.abs(L @ G))),
        "Ladj_1": float(np.max(np.abs(Ladj @ np.ones(spec.M)))),
    }
    # adjointness under the quadrature pairing on random fields
    rng = np.random.default_rng(seed)
    g, h = rng.standard_normal((2, spec.M))
    lhs, rhs = w * h @ (L @ g), w * (Ladj @ h) @ g
    res["adjointness"] = float(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))

    Q = _nyquist_free_basis(grid)
    dims = []
    for A in (L, Ladj):
        s = np.linalg.svd(A @ Q, compute_uv=False)
        dims.append(int(np.sum(s <= 1e-9 * s[0])))

    # directional derivative of D_f at G along a smooth mass-zero direction
    k = np.arange(1, 6)
    dirn = (rng.standard_normal((5, 1)) * np.cos(np.outer(k, grid.nodes))
            + rng.standard_normal((5, 1)) * np.sin(np.outer(k, grid.nodes))).sum(axis=0)
    dirn = dirn * 0.1 * np.min(G) / np.max(np.abs(dirn))
    delta = 1e-6
    fd = (apply_D_f(spec, G + delta * dirn) - apply_D_f(spec, G - delta * dirn)) / (2 * delta)
    fd_res = float(np.max(np.abs(fd - L @ dirn)) / max(np.max(np.abs(L @ dirn)), 1e-300))

    Pi_G = w * np.outer(G, np.ones(spec.M))
    ops = LinearizedOps(L=L, Ladj=Ladj, Pi_G=Pi_G, mean_projector=np.eye(spec.M) - Pi_G,
                        kappa_margin=np.nan, G=G, quad_weight=w, kernel_dims=tuple(dims),
                        kernel_residuals=res, fd_residual=fd_res, tol_op=tol, _nyq=grid.nyquist)
    kappa = dissipativity_margin(ops, eq, spec)
    object.__setattr__(ops, "kappa_margin", kappa)
    if warn and not kappa > 0:
        warnings.warn(f"{spec.name}: dissipativity margin {kappa:.3e} is not positive",
                      DissipativityNotCertified, stacklevel=2)
    return ops


def dissipativity_margin(ops: LinearizedOps, eq: EquilibriumState, spec: ModelSpec) -> float:
    """Smallest generalized eigenvalue of -(G^-1 L)_sym against the Dirichlet form."""
    grid = spec.grid
    G, w = eq.G, grid.quad_weight
    A = -w * ops.L / G[:, None]
    A = 0.5 * (A + A.T)
    Dg = grid.D1 / G[None, :]
    B = w * Dg.T @ ((G * spec.Gamma_s)[:, None] * Dg)
    Q = _nyquist_free_basis(grid, with_mass=True)
    Ar, Br = Q.T @ A @ Q, Q.T @ B @ Q
    bmin = float(np.min(np.linalg.eigvalsh(Br)))
    if bmin <= 1e-12 * float(np.max(np.abs(Br))):
        raise DegenerateDirichletForm(f"Dirichlet form has eigenvalue {bmin:.3e} off span(G)")
    return float(sla.eigh(Ar, Br, eigvals_only=True, subset_by_index=[0, 0])[0])


def apply_T0(spec: ModelSpec, eq: EquilibriumState, g, sgrid: SpatialGrid):
    """Centered transport Vbar . grad_q g for a field of shape (*counts, M)."""
    Vb = spec.Vbar(eq.G)
    gm = np.moveaxis(np.asarray(g, dtype=float), -1, 0)
    grad = sgrid.grad_q(gm)
    shape = (sgrid.n, spec.M) + (1,) * sgrid.n
    out = np.sum(Vb.reshape(shape) * grad, axis=0)
    return np.moveaxis(out, 0, -1)


def apply_T(spec: ModelSpec, g, sgrid: SpatialGrid):
    """Uncentered transport V . grad_q g."""
    gm = np.moveaxis(np.asarray(g, dtype=float), -1, 0)
    grad = sgrid.grad_q(gm)
    shape = (sgrid.n, spec.M) + (1,) * sgrid.n
    return np.moveaxis(np.sum(spec.V_s.reshape(shape) * grad, axis=0), 0, -1)

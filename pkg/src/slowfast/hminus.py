"""Weighted H^-1 norms: angular fibers (closed form) and matrix-weighted spatial norms.

A field whose mean does not vanish has infinite norm. That case returns
``math.inf`` rather than raising, since rate functionals legitimately take
the value +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import TOL_MEAN, AngularGrid, SpatialGrid

INF = math.inf


@lru_cache(maxsize=16)
def _angular(M: int) -> AngularGrid:
    return AngularGrid(M)


@dataclass(frozen=True)
class FiberNormResult:
    value: float
    control: np.ndarray | None
    multiplier: np.ndarray | None

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


def _fiber_mass_ok(g, grid, tol_mean):
    mass = grid.quad(g)
    scale = np.maximum(grid.quad(np.abs(g)), np.finfo(float).tiny)
    return np.abs(mass) <= tol_mean * scale


def fiber_norm_batch(g, h, tol_mean=TOL_MEAN, return_control=False):
    """Squared fiber norms for stacks of fields along the last axis; inf where mass fails."""
    g = np.asarray(g, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), g.shape)
    grid = _angular(g.shape[-1])
    if np.any(h <= 0):
        raise ValueError("fiber weight must be positive")
    ok = _fiber_mass_ok(g, grid, tol_mean)
    # subtract the (tiny) mean so the antiderivative exists; infeasible fibers are masked below
    g0 = g - grid.quad(g)[..., None] / (2 * np.pi)
    C = grid.antiderivative_theta(g0, tol_mean=np.inf)
    inv_h = 1.0 / h
    cstar = C - (grid.quad(C * inv_h) / grid.quad(inv_h))[..., None]
    value = np.where(ok, grid.quad(cstar**2 * inv_h), np.inf)
    if return_control:
        return value, cstar
    return value


def fiber_norm_sq(g, h=1.0, tol_mean=TOL_MEAN) -> FiberNormResult:
    """inf over controls c with dc = g of the integral of c^2 / h.

    The minimizer is C minus a constant, where C is the mean-zero
    antiderivative of g. The multiplier phi solves h dphi = -c and maximizes
    2 <g, phi> - <h dphi, dphi>.
    """
    g = np.asarray(g, dtype=float)
    grid = _angular(g.shape[-1])
    h = np.broadcast_to(np.asarray(h, dtype=float), g.shape)
    value, c = fiber_norm_batch(g, h, tol_mean, return_control=True)
    if math.isinf(float(value)):
        return FiberNormResult(INF, None, None)
    phi = grid.antiderivative_theta(-c / h, tol_mean=1e-8)
    return FiberNormResult(float(value), c, phi)


def fiber_norm_sq_sup(g, h=1.0, tol_mean=TOL_MEAN) -> float:
    """Sup form by a direct linear solve of -d(h dphi) = g on the grid."""
    g = np.asarray(g, dtype=float)
    grid = _angular(g.size)
    h = np.broadcast_to(np.asarray(h, dtype=float), g.shape)
    if not _fiber_mass_ok(g, grid, tol_mean):
        return INF
    D1 = grid.D1
    A = -D1 @ (h[:, None] * D1)
    rows = np.vstack([A, np.ones(grid.M), grid.nyquist])
    b = np.concatenate([g - np.mean(g), [0.0, 0.0]])
    phi = np.linalg.lstsq(rows, b, rcond=None)[0]
    dphi = D1 @ phi
    return float(2 * grid.quad(g * phi) - grid.quad(h * dphi**2))


@dataclass(frozen=True)
class SpatialNormResult:
    value: float
    potential: np.ndarray | None
    control: np.ndarray | None
    inf_value: float


def _spatial_mean_ok(g, sgrid, tol_mean, scale=0.0):
    scale = max(float(sgrid.quad(np.abs(g))), scale, np.finfo(float).tiny)
    return abs(float(sgrid.quad(g))) <= tol_mean * scale


def spatial_weighted_norm(g, chi, sgrid: SpatialGrid, tol_mean=TOL_MEAN, scale=0.0) -> SpatialNormResult:
    """Sup form via div(chi grad phi) = -g, plus the inf form for the control c = -chi grad phi.

    ``scale`` is a size reference for the mean test when g is a small
    difference of larger terms.
    """
    g = np.asarray(g, dtype=float)
    if not _spatial_mean_ok(g, sgrid, tol_mean, scale):
        return SpatialNormResult(INF, None, None, INF)
    if not np.any(g):
        z = np.zeros(sgrid.counts)
        return SpatialNormResult(0.0, z, np.zeros((sgrid.n, *sgrid.counts)), 0.0)
    g = g - sgrid.mean(g)
    phi = sgrid.solve_weighted_poisson_q(chi, g, tol_mean=np.inf)
    chi_m = sgrid._as_matrix_field(chi)
    grad = sgrid.grad_q(phi)
    c = -np.einsum("ab...,b...->a...", chi_m, grad)
    value = float(sgrid.quad(g * phi))
    # inf form: integral of c . chi^{-1} c
    chi_nodes = np.moveaxis(chi_m.reshape(sgrid.n, sgrid.n, -1), -1, 0)
    c_nodes = c.reshape(sgrid.n, -1).T
    sol = np.linalg.solve(chi_nodes, c_nodes[..., None])[..., 0]
    inf_value = float(sgrid.cell_volume * np.sum(c_nodes * sol))
    return SpatialNormResult(value, phi, c, inf_value)


def spatial_weighted_norm_sq(g, chi, sgrid: SpatialGrid, tol_mean=TOL_MEAN, scale=0.0) -> float:
    return spatial_weighted_norm(g, chi, sgrid, tol_mean, scale).value


__all__ = ["INF", "FiberNormResult", "SpatialNormResult", "fiber_norm_sq", "fiber_norm_batch",
           "fiber_norm_sq_sup", "spatial_weighted_norm", "spatial_weighted_norm_sq"]

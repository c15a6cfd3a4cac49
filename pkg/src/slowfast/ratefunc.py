"""Finite-epsilon rate functional, its limit, the liminf pairing and recovery sequences.

Space-angle fields have shape (*counts, M); paths stack slices on a leading
time axis. Time derivatives use central differences inside the window and
second-order one-sided differences at the ends (``np.gradient``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .coeffs import CoefficientSet
from .equilibrium import EquilibriumState
from .errors import EpsilonTooLarge
from .grid import SpatialGrid
from .hminus import INF, fiber_norm_batch, spatial_weighted_norm
from .linops import apply_D_f, apply_T0
from .model import ModelSpec

TOL_MASS = 1e-8


@dataclass(frozen=True)
class DensityPath:
    times: np.ndarray
    values: np.ndarray
    sgrid: SpatialGrid
    kind: str = "general"
    rho: np.ndarray | None = None
    G: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 3 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be increasing with at least 3 slices")
        object.__setattr__(self, "times", t)
        if self.kind not in ("general", "local_equilibrium"):
            raise ValueError(f"unknown path kind {self.kind!r}")

    @classmethod
    def local_equilibrium(cls, times, rho, G, sgrid):
        rho = np.asarray(rho, dtype=float)
        return cls(times, rho[..., None] * G, sgrid, "local_equilibrium", rho, np.asarray(G))

    @property
    def slices(self) -> int:
        return self.times.size

    @cached_property
    def dfdt(self) -> np.ndarray:
        return np.gradient(self.values, self.times, axis=0, edge_order=2)

    @cached_property
    def drhodt(self) -> np.ndarray:
        rho = self.marginal()
        return np.gradient(rho, self.times, axis=0, edge_order=2)

    def marginal(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return (2 * np.pi / self.values.shape[-1]) * np.sum(self.values, axis=-1)

    def total_mass(self) -> np.ndarray:
        return np.array([self.sgrid.quad(r) for r in self.marginal()])


def time_integral(times, values):
    """Trapezoid rule; inf if any entry is inf."""
    values = np.asarray(values, dtype=float)
    if np.any(np.isinf(values)):
        return INF
    return float(np.trapezoid(values, times))


def A_eps(path: DensityPath, spec: ModelSpec, eq: EquilibriumState, s: int, epsilon=None):
    """eps d_t f + T_0 f - eps^-1 D_f(f) at slice s."""
    eps = spec.epsilon if epsilon is None else epsilon
    f = path.values[s]
    out = apply_T0(spec, eq, f, path.sgrid)
    if eps > 0:
        out = out + eps * path.dfdt[s] - apply_D_f(spec, f) / eps
    return out


def _terms_scale(path, spec, eq, s, eps):
    f = path.values[s]
    grid = spec.grid
    parts = [np.abs(apply_T0(spec, eq, f, path.sgrid))]
    if eps > 0:
        parts += [eps * np.abs(path.dfdt[s]), np.abs(apply_D_f(spec, f)) / eps]
    return grid.quad(sum(parts))


def rate_eps(path: DensityPath, spec: ModelSpec, eq: EquilibriumState, epsilon=None,
             tol_mass=TOL_MASS, per_slice=False):
    """(1/4) int_0^T of the q-integral of ||A_eps||^2 in H^-1(Gamma f) per fiber.

    A fiber whose A has nonzero angular mass makes the value infinite. The
    mass defect is measured relative to the size of the terms making up A
    (or the fiber mass of f, if larger), so paths satisfying the constraint
    up to rounding remain finite.
    """
    eps = spec.epsilon if epsilon is None else epsilon
    sg = path.sgrid
    vals = np.empty(path.slices)
    for s in range(path.slices):
        A = A_eps(path, spec, eq, s, eps)
        h = spec.Gamma_s * path.values[s]
        if np.any(h <= 0):
            vals[s] = INF
            continue
        mass = spec.grid.quad(A)
        # floor by the fiber mass of f so that rounding-level A is not flagged
        scale = np.maximum(_terms_scale(path, spec, eq, s, eps), spec.grid.quad(np.abs(path.values[s])))
        if np.any(np.abs(mass) > tol_mass * scale):
            vals[s] = INF
            continue
        norms = fiber_norm_batch(A, h, tol_mean=np.inf)
        vals[s] = float(sg.quad(norms))
    total = 0.25 * time_integral(path.times, vals)
    return (total, 0.25 * vals) if per_slice else total


def _rho_sigma(rho, Sigma, sgrid):
    n = sgrid.n
    return Sigma.reshape(n, n, *(1,) * n) * rho[None, None]


def _div_D_grad(rho, D, sgrid):
    g = sgrid.grad_q(rho)
    return sgrid.div_q(np.einsum("ab,b...->a...", D, g))


def hydro_residual(path: DensityPath, coeffs: CoefficientSet, with_scale=False):
    """d_t rho - div(D grad rho) on every slice (and the size of the two terms)."""
    rho = path.marginal()
    diff = np.stack([_div_D_grad(r, coeffs.Dmat, path.sgrid) for r in rho])
    g = path.drhodt - diff
    if with_scale:
        scale = np.array([path.sgrid.quad(np.abs(a) + np.abs(b)) for a, b in zip(path.drhodt, diff)])
        return g, scale
    return g


def rate_limit(path: DensityPath, eq: EquilibriumState, coeffs: CoefficientSet, per_slice=False):
    """(1/4) int_0^T ||d_t rho - div D grad rho||^2 in H^-1(rho sigma); inf off local equilibria."""
    if path.kind != "local_equilibrium":
        return (INF, None) if per_slice else INF
    sg = path.sgrid
    g, scale = hydro_residual(path, coeffs, with_scale=True)
    vals = np.array([spatial_weighted_norm(g[s], _rho_sigma(path.rho[s], coeffs.Sigma, sg), sg,
                                           scale=scale[s]).value
                     for s in range(path.slices)])
    total = 0.25 * time_integral(path.times, vals)
    return (total, 0.25 * vals) if per_slice else total


@dataclass(frozen=True)
class LiminfReport:
    value: float
    limit_value: float
    branch: str


def _optimal_phi_minus1(base: DensityPath, coeffs):
    sg = base.sgrid
    g, scale = hydro_residual(base, coeffs, with_scale=True)
    phis = []
    for s in range(base.slices):
        r = spatial_weighted_norm(g[s], _rho_sigma(base.rho[s], coeffs.Sigma, sg), sg, scale=scale[s])
        if r.potential is None:
            raise ValueError("d_t rho - div D grad rho has nonzero spatial mean; rho does not conserve mass")
        phis.append(r.potential)
    return g, np.stack(phis)


def liminf_bound(path: DensityPath, spec: ModelSpec, eq: EquilibriumState, coeffs: CoefficientSet,
                 base: DensityPath | None = None, epsilon=None) -> LiminfReport:
    """Lower bound for I_T^eps from the sup form with an explicit test function.

    With a local-equilibrium limit ``base`` the test function is
    phi = phi_-1 / eps + psi . grad phi_-1, where phi_-1 maximizes the
    limiting pairing (a weighted Poisson solve). ``limit_value`` is the
    eps -> 0 value of the pairing. Without ``base`` the family is treated as
    converging to a non-equilibrium f and the test function is eps^-1 times
    the fiberwise maximizer for -D_f(f), which makes the bound blow up
    like eps^-2.
    """
    eps = spec.epsilon if epsilon is None else epsilon
    sg = path.sgrid
    grid = spec.grid
    vals = np.empty(path.slices)
    if base is not None:
        if base.kind != "local_equilibrium":
            raise ValueError("base must be a local-equilibrium path")
        g, phi_m1 = _optimal_phi_minus1(base, coeffs)
        limit = np.empty(path.slices)
        for s in range(path.slices):
            grad = sg.grad_q(phi_m1[s])
            # phi(q, theta) = phi_-1 / eps + psi(theta) . grad phi_-1(q)
            phi0 = np.einsum("a...,am->...m", grad, coeffs.psi)
            phi = phi_m1[s][..., None] / eps + phi0
            dphi = np.einsum("a...,am->...m", grad, grid.d_theta(coeffs.psi))
            A = A_eps(path, spec, eq, s, eps)
            pair = 2 * sg.quad(grid.quad(phi * A)) - sg.quad(grid.quad(dphi**2 * spec.Gamma_s * path.values[s]))
            vals[s] = pair
            chi = _rho_sigma(base.rho[s], coeffs.Sigma, sg)
            flux = np.einsum("ab...,b...->a...", chi, grad)
            limit[s] = 2 * sg.quad(phi_m1[s] * g[s]) - sg.quad(np.sum(grad * flux, axis=0))
        return LiminfReport(0.25 * time_integral(path.times, vals),
                            0.25 * time_integral(path.times, limit), "local_equilibrium")
    for s in range(path.slices):
        f = path.values[s]
        h = spec.Gamma_s * f
        Df = -apply_D_f(spec, f)
        Df = Df - grid.quad(Df)[..., None] / (2 * np.pi)
        _, c = fiber_norm_batch(Df, h, tol_mean=np.inf, return_control=True)
        phi = grid.antiderivative_theta(-c / h, tol_mean=1e-6) / eps
        dphi = grid.d_theta(phi)
        A = A_eps(path, spec, eq, s, eps)
        vals[s] = 2 * sg.quad(grid.quad(phi * A)) - sg.quad(grid.quad(dphi**2 * h))
    return LiminfReport(0.25 * time_integral(path.times, vals), INF, "non_equilibrium")


@dataclass(frozen=True)
class RecoverySequence:
    epsilon: float
    base: DensityPath
    f1: np.ndarray
    a: np.ndarray
    path: DensityPath


def optimal_control(base: DensityPath, coeffs: CoefficientSet):
    """a with div(E a) = d_t rho - div D grad rho minimizing the R-weighted cost.

    For the canonical xi (E = R = sigma) the minimizer is E a = -rho sigma grad phi
    with div(rho sigma grad phi) = -(d_t rho - div D grad rho).
    """
    sg = base.sgrid
    g, phi = _optimal_phi_minus1(base, coeffs)
    E = coeffs.Emat
    a = np.empty((base.slices, sg.n, *sg.counts))
    for s in range(base.slices):
        b = -np.einsum("ab...,b...->a...", _rho_sigma(base.rho[s], coeffs.Sigma, sg), sg.grad_q(phi[s]))
        a[s] = np.linalg.lstsq(E, b.reshape(sg.n, -1), rcond=None)[0].reshape(b.shape)
    return a


def build_recovery(base: DensityPath, eq: EquilibriumState, coeffs: CoefficientSet,
                   epsilon: float) -> RecoverySequence:
    """f^eps = rho G - eps G [omega . grad rho + xi . a]."""
    if base.kind != "local_equilibrium":
        raise ValueError("recovery sequences are built on local-equilibrium paths")
    if np.any(base.rho <= 0):
        raise ValueError("rho must be positive")
    sg = base.sgrid
    G = eq.G
    a = optimal_control(base, coeffs)
    grad_rho = np.stack([sg.grad_q(r) for r in base.rho])
    f1 = -G * (np.einsum("sa...,am->s...m", grad_rho, coeffs.omega)
               + np.einsum("sa...,am->s...m", a, coeffs.xi))
    values = base.values + epsilon * f1
    if np.min(values) <= 0:
        raise EpsilonTooLarge(f"recovery density is not positive at epsilon = {epsilon}")
    path = DensityPath(base.times, values, sg, "general", None, G)
    return RecoverySequence(epsilon=epsilon, base=base, f1=f1, a=a, path=path)


@dataclass(frozen=True)
class GammaSweepReport:
    epsilons: np.ndarray
    rate_eps: np.ndarray
    liminf: np.ndarray
    liminf_limit: float
    rate_limit: float
    order: float
    monotone: bool
    sandwich: bool

    def rows(self):
        gaps = np.abs(self.rate_eps - self.rate_limit)
        return [dict(epsilon=float(e), rate_eps=float(r), liminf_bound=float(b),
                     rate_limit=self.rate_limit, gap=float(g))
                for e, r, b, g in zip(self.epsilons, self.rate_eps, self.liminf, gaps)]


def fit_order(eps, err):
    """Least-squares slope of log err against log eps."""
    eps, err = np.asarray(eps, float), np.asarray(err, float)
    good = err > 0
    if good.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(eps[good]), np.log(err[good]), 1)[0])


def gamma_sweep(base: DensityPath, spec: ModelSpec, eq: EquilibriumState, coeffs: CoefficientSet,
                eps_ladder=(0.2, 0.1, 0.05, 0.025), tol_mass=TOL_MASS, sandwich_tol=1e-8) -> GammaSweepReport:
    eps_ladder = np.asarray(sorted(eps_ladder, reverse=True), dtype=float)
    I_T = rate_limit(base, eq, coeffs)
    rates, bounds = [], []
    lim = math.nan
    for eps in eps_ladder:
        rec = build_recovery(base, eq, coeffs, float(eps))
        rates.append(rate_eps(rec.path, spec, eq, epsilon=float(eps), tol_mass=tol_mass))
        rep = liminf_bound(rec.path, spec, eq, coeffs, base=base, epsilon=float(eps))
        bounds.append(rep.value)
        lim = rep.limit_value
    rates, bounds = np.array(rates), np.array(bounds)
    gaps = np.abs(rates - I_T)
    scale = max(abs(I_T), 1.0)
    return GammaSweepReport(
        epsilons=eps_ladder, rate_eps=rates, liminf=bounds, liminf_limit=lim, rate_limit=I_T,
        order=fit_order(eps_ladder, gaps),
        monotone=bool(np.all(np.diff(gaps) < 0)),
        sandwich=bool(np.all(bounds <= rates + sandwich_tol * scale)))

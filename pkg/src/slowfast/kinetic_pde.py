"""Deterministic kinetic equation: IMEX time stepping and the Chapman-Enskog check.

Lab frame (microscopic time t):
    d_t f = D_f(f) - eps V . grad f
Moving frame (diffusive time tau = eps^2 t, shifted by tau <V>_G / eps):
    d_tau f = eps^-2 D_f(f) - eps^-1 Vbar . grad f

The angular operator is implicit per fiber (its drift lagged/extrapolated
when there is an interaction); transport is explicit and spectral in q.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import compute_coefficients
from .equilibrium import EquilibriumState, solve_equilibrium
from .errors import StepUnstable, VacuousDensity
from .grid import SpatialGrid
from .linops import EPS_MASS, assemble_linearized
from .model import ModelSpec, convolve_F
from .ratefunc import DensityPath, fit_order

BLOW_UP = 1e3
NEG_TOL = 1e-10


@dataclass(frozen=True)
class KineticSolution:
    path: DensityPath
    frame: str
    dt: float
    scheme_order: int
    mass_drift: float
    min_value: float
    clipped: bool
    epsilon: float


def _angular_matrix(spec, drift):
    """Matrix of g -> d(Gamma drift g + Gamma dg); drift may be (..., M)."""
    D1 = spec.grid.D1
    Gam = spec.Gamma_s
    base = D1 @ (Gam[:, None] * D1)
    drift = np.asarray(drift)
    if drift.ndim == 1:
        return base + D1 * (Gam * drift)[None, :]
    return base + D1[None] * (Gam * drift)[:, None, :]


class _Stepper:
    def __init__(self, spec, sgrid, eq, frame, epsilon, dt):
        self.spec, self.sgrid, self.dt = spec, sgrid, dt
        if frame == "lab":
            self.a, self.b, self.V = 1.0, epsilon, spec.V_s
        elif frame == "moving":
            if epsilon <= 0:
                raise ValueError("the moving frame needs epsilon > 0")
            self.a, self.b, self.V = epsilon**-2, 1.0 / epsilon, spec.Vbar(eq.G)
        else:
            raise ValueError(f"unknown frame {frame!r}")
        self.linear = not spec.has_interaction
        if self.linear:
            A = self.a * _angular_matrix(spec, spec.dU)
            I = np.eye(spec.M)
            self.inv1 = np.linalg.inv(I - dt * A).T
            self.inv2 = np.linalg.inv(3 * I - 2 * dt * A).T

    def explicit(self, f):
        if self.b == 0 or self.V.size == 0:
            return np.zeros_like(f)
        gm = np.moveaxis(f, -1, 0)
        grad = self.sgrid.grad_q(gm)
        shape = (self.sgrid.n, self.spec.M) + (1,) * self.sgrid.n
        return -self.b * np.moveaxis(np.sum(self.V.reshape(shape) * grad, axis=0), 0, -1)

    def _implicit_solve(self, rhs, fstar, c0, c1):
        """Solve (c0 I - c1 dt a A[fstar]) x = rhs per fiber."""
        spec = self.spec
        if self.linear:
            return rhs @ (self.inv1 if c0 == 1 else self.inv2)
        mass = spec.grid.quad(fstar)
        if np.any(mass <= EPS_MASS):
            raise VacuousDensity("a fiber lost its mass during time stepping")
        drift = spec.dU + convolve_F(spec, fstar) / mass[..., None]
        flat = drift.reshape(-1, spec.M)
        A = self.a * _angular_matrix(spec, flat)
        mats = c0 * np.eye(spec.M)[None] - c1 * self.dt * A
        x = np.linalg.solve(mats, rhs.reshape(-1, spec.M)[..., None])[..., 0]
        return x.reshape(rhs.shape)

    def euler(self, f):
        return self._implicit_solve(f + self.dt * self.explicit(f), f, 1, 1)

    def sbdf2(self, f, f_prev, e, e_prev):
        rhs = 4 * f - f_prev + 2 * self.dt * (2 * e - e_prev)
        return self._implicit_solve(rhs, 2 * f - f_prev, 3, 2)


def integrate_kinetic(spec: ModelSpec, f0, T: float, dt: float, sgrid: SpatialGrid, frame="lab",
                      epsilon=None, eq: EquilibriumState | None = None, order=2, save_every=None,
                      blow_up=BLOW_UP, layer=None) -> KineticSolution:
    """IMEX integration up to time T; slices saved every ``save_every`` steps.

    ``layer`` = (duration, dt_layer) runs an initial stretch with a finer step
    (for the fast angular relaxation of unprepared data), then restarts the
    multistep scheme with ``dt``.
    """
    eps = spec.epsilon if epsilon is None else float(epsilon)
    f = np.array(f0, dtype=float)
    if f.shape != (*sgrid.counts, spec.M):
        raise ValueError(f"f0 must have shape {(*sgrid.counts, spec.M)}")
    if np.min(f) < 0 or np.any(spec.grid.quad(f) <= EPS_MASS):
        raise ValueError("f0 must be non-negative with positive mass on every fiber")
    if order not in (1, 2):
        raise ValueError("scheme order must be 1 or 2")
    if eq is None and frame == "moving":
        eq = solve_equilibrium(spec)
    segments = []
    t_main = T
    if layer is not None and layer[0] < T and layer[1] < dt:
        n_l = max(1, int(round(layer[0] / layer[1])))
        segments.append((n_l, layer[0] / n_l, False))
        t_main = T - layer[0]
    steps = max(1, int(round(t_main / dt)))
    dt = t_main / steps
    save_every = save_every or max(1, steps // 100)
    segments.append((steps, dt, True))

    def mass_of(x):
        return float(sgrid.quad(spec.grid.quad(x)))

    m0 = mass_of(f)
    sup0 = float(np.max(np.abs(f)))
    times, snaps = [0.0], [f.copy()]
    min_val = float(np.min(f))
    clipped = False
    t = 0.0
    for nsteps, h, saving in segments:
        st = _Stepper(spec, sgrid, eq, frame, eps, h)
        f_prev = e_prev = None
        for k in range(1, nsteps + 1):
            e = st.explicit(f)
            if order == 1 or f_prev is None:
                f_new = st.euler(f)
            else:
                f_new = st.sbdf2(f, f_prev, e, e_prev)
            f_prev, e_prev, f = f, e, f_new
            t += h
            peak = float(np.max(np.abs(f)))
            if not np.isfinite(peak) or peak > blow_up * sup0:
                raise StepUnstable(f"solution exceeded {blow_up:g} x its initial size at t = {t:.4g}")
            lo = float(np.min(f))
            min_val = min(min_val, lo)
            if lo < -NEG_TOL * peak:
                clipped = True
                f = np.maximum(f, 0.0)
            if saving and (k % save_every == 0 or k == nsteps):
                times.append(t)
                snaps.append(f.copy())
    mass_drift = abs(mass_of(f) - m0) / abs(m0)
    if len(times) < 3:
        raise ValueError("too few saved slices; lower save_every")
    path = DensityPath(np.array(times), np.stack(snaps), sgrid, "general", None,
                       None if eq is None else eq.G)
    return KineticSolution(path=path, frame=frame, dt=dt, scheme_order=order, mass_drift=mass_drift,
                           min_value=min_val, clipped=clipped, epsilon=eps)


def to_moving_frame(sol: KineticSolution, spec: ModelSpec, eq: EquilibriumState) -> DensityPath:
    """Resample a lab-frame run as f(q + tau <V>/eps, theta, tau / eps^2), tau = eps^2 t."""
    eps = sol.epsilon
    sg = sol.path.sgrid
    mean_V = spec.mean_V(eq.G)
    tau = eps**2 * sol.path.times
    vals = np.stack([
        np.moveaxis(sg.shift(np.moveaxis(f, -1, 0), t * mean_V / eps), 0, -1)
        for f, t in zip(sol.path.values, tau)])
    return DensityPath(tau, vals, sg, "general", None, eq.G)


def _dominant_mode(rho0, sgrid):
    rh = np.fft.fftn(rho0)
    amp = np.abs(rh)
    amp[(0,) * sgrid.n] = 0.0
    if np.max(amp) <= 1e-14 * max(1.0, abs(rh[(0,) * sgrid.n])):
        return None
    idx = np.unravel_index(np.argmax(amp), amp.shape)
    kvec = np.array([float(np.ravel(k)[i]) for k, i in zip(sgrid.wavenumbers, idx)])
    return idx, kvec


@dataclass(frozen=True)
class ChapmanEnskogReport:
    epsilons: np.ndarray
    errors: np.ndarray
    decay_rates: np.ndarray
    predicted_rate: float
    order: float
    Dmat: np.ndarray

    def rows(self):
        return [dict(epsilon=float(e), error=float(r), decay_rate=float(d), predicted_rate=self.predicted_rate)
                for e, r, d in zip(self.epsilons, self.errors, self.decay_rates)]


def chapman_enskog_check(spec: ModelSpec, rho0, sgrid: SpatialGrid, eps_ladder=(0.2, 0.1, 0.05, 0.025),
                         T_diff=1.0, dt=1e-3, order=2, layer_steps=200) -> ChapmanEnskogReport:
    """Compare the kinetic marginal in the moving frame with the diffusion equation.

    The comparison uses the dominant Fourier mode of rho0, where the
    diffusion solution is exp(-k.Dk t) times the initial amplitude. The
    initial datum rho0 G is not prepared, so each run starts with a short
    finely stepped stretch covering the angular relaxation.
    """
    eq = solve_equilibrium(spec)
    ops = assemble_linearized(spec, eq)
    coeffs = compute_coefficients(spec, eq, ops)
    D = coeffs.Dmat
    rho0 = np.asarray(rho0, dtype=float)
    mode = _dominant_mode(rho0, sgrid)
    eps_ladder = np.asarray(sorted(eps_ladder, reverse=True), dtype=float)
    if mode is None:
        z = np.zeros(eps_ladder.size)
        return ChapmanEnskogReport(eps_ladder, z, z, 0.0, np.nan, D)
    idx, kvec = mode
    rate = float(kvec @ D @ kvec)
    a0 = np.fft.fftn(rho0)[idx]
    f0 = rho0[..., None] * eq.G
    errs, rates = [], []
    for eps in eps_ladder:
        # the angular relaxation lasts O(eps^2) in diffusive time; resolve it before the main run
        layer = (10 * eps**2, 10 * eps**2 / layer_steps) if layer_steps else None
        sol = integrate_kinetic(spec, f0, T_diff, dt, sgrid, frame="moving", epsilon=eps, eq=eq,
                                order=order, save_every=max(1, int(round(T_diff / dt)) // 4), layer=layer)
        rhoT = sol.path.marginal()[-1]
        aT = np.fft.fftn(rhoT)[idx]
        errs.append(abs(aT - a0 * np.exp(-rate * T_diff)) / abs(a0))
        rates.append(-np.log(abs(aT) / abs(a0)) / (T_diff * float(kvec @ kvec)))
    errs = np.array(errs)
    return ChapmanEnskogReport(eps_ladder, errs, np.array(rates), rate / float(kvec @ kvec),
                               fit_order(eps_ladder, errs), D)

"""The acceptance suite: ten numbered checks, each returning a CheckResult."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad as scipy_quad

from .coeffs import assemble_matrices, compute_coefficients, schur_sweep
from .equilibrium import solve_equilibrium
from .grid import SpatialGrid
from .hminus import fiber_norm_sq, fiber_norm_sq_sup, spatial_weighted_norm
from .kinetic_pde import chapman_enskog_check
from .linops import assemble_linearized
from .model import active_2d, free_abp, von_mises
from .particles import ParticleConfig, estimate_transport, fluctuation_spectrum
from .ratefunc import DensityPath, build_recovery, gamma_sweep, rate_eps, rate_limit


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = float("inf")

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:2d} {self.name} ({self.runtime:.1f}s)"


def _timed(number, name, budget):
    def wrap(fn):
        def run(**kw):
            t0 = time.perf_counter()
            passed, details = fn(**kw)
            dt = time.perf_counter() - t0
            details["within_budget"] = bool(dt < budget)
            return CheckResult(number, name, bool(passed and dt < budget), details, dt, budget)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1, "equilibrium oracle (von Mises)", budget=1.0)
def check_equilibrium(M=128):
    spec = von_mises(M=M)
    eq = solve_equilibrium(spec)
    I0 = scipy_quad(lambda t: np.exp(np.cos(t)), 0.0, np.pi, epsabs=1e-14, epsrel=1e-14)[0] / np.pi
    exact = np.exp(-np.cos(spec.grid.nodes)) / (2 * np.pi * I0)
    err = float(np.max(np.abs(eq.G - exact)))
    return err < 1e-9, {"max_error": err, "I0": I0, "residual": eq.residual}


@_timed(2, "operator identities", budget=60.0)
def check_operators(M=128):
    details, ok = {}, True
    for name, spec in (("free_abp", free_abp(M=M)), ("von_mises", von_mises(M=M)),
                       ("active_2d", active_2d(M=M, coupling=0.2))):
        eq = solve_equilibrium(spec)
        ops = assemble_linearized(spec, eq)
        r = ops.kernel_residuals
        pil = float(np.max(np.abs(ops.Pi_G @ ops.L)))
        good = r["L_G"] < 1e-8 and r["Ladj_1"] < 1e-8 and r["adjointness"] < 1e-9 and pil < 1e-10
        details[name] = dict(L_G=r["L_G"], Ladj_1=r["Ladj_1"], adjointness=r["adjointness"],
                             Pi_G_L=pil, kernel_dims=list(ops.kernel_dims))
        ok &= good
    return ok, details


@_timed(3, "dissipativity margin", budget=60.0)
def check_dissipativity(M=128):
    details = {}
    ok = True
    for name, spec in (("free_abp", free_abp(M=M)), ("von_mises", von_mises(M=M))):
        k = assemble_linearized(spec, solve_equilibrium(spec)).kappa_margin
        details[name] = k
        ok &= abs(k - 1.0) < 1e-8
    for c in (0.2, 0.1, 0.0, -0.2):
        spec = active_2d(M=M, coupling=c)
        k = assemble_linearized(spec, solve_equilibrium(spec)).kappa_margin
        details[f"active_2d[{c:g}]"] = k
        ok &= k > 0
    return ok, details


@_timed(4, "coefficient oracle (free_abp)", budget=30.0)
def check_coefficients(M=128):
    spec = free_abp(M=M, n=2)
    eq = solve_equilibrium(spec)
    ops = assemble_linearized(spec, eq)
    c = compute_coefficients(spec, eq, ops)
    half = 0.5 * np.eye(2)
    errD = float(np.max(np.abs(c.Dmat - half)))
    errS = float(np.max(np.abs(c.Sigma - half)))
    shifted = assemble_matrices(eq, spec, c.psi + np.array([[3.0], [-1.5]]), c.omega, c.xi,
                                c.flux_potential)
    shift = float(max(np.max(np.abs(shifted.Dmat - c.Dmat)), np.max(np.abs(shifted.Sigma - c.Sigma))))
    ok = errD < 1e-10 and errS < 1e-10 and shift < 1e-10
    return ok, {"D_error": errD, "sigma_error": errS, "psi_shift": shift, "D": c.Dmat, "sigma": c.Sigma}


@_timed(5, "identity chain E = R = sigma, Schur gap, duality", budget=60.0)
def check_identity_chain(M=128, trials=32, seed=0):
    details, ok = {}, True
    for name, spec in (("free_abp", free_abp(M=M)), ("von_mises", von_mises(M=M)),
                       ("active_2d", active_2d(M=M, coupling=0.2))):
        eq = solve_equilibrium(spec)
        ops = assemble_linearized(spec, eq)
        c = compute_coefficients(spec, eq, ops)
        er = float(np.linalg.norm(c.Emat - c.Rmat))
        rs = float(np.linalg.norm(c.Rmat - c.Sigma))
        sch = schur_sweep(eq, spec, ops, trials=trials, seed=seed, coeffs=c)
        dual = c.residuals["duality"]
        good = er < 1e-8 and rs < 1e-8 and sch.min_eig_gap >= -1e-10 and dual < 1e-9
        details[name] = dict(E_minus_R=er, R_minus_sigma=rs, min_schur_gap=sch.min_eig_gap,
                             duality=dual)
        ok &= good
    return ok, details


@_timed(6, "H^-1 inf/sup duality", budget=60.0)
def check_hminus(M=128, trials=50, seed=0):
    rng = np.random.default_rng(seed)
    th = -np.pi + 2 * np.pi * np.arange(M) / M
    k = np.arange(1, 9)[:, None]
    worst_fiber = 0.0
    for _ in range(trials):
        a, b = rng.standard_normal((2, 8, 1)) / k
        g = (a * np.cos(k * th) + b * np.sin(k * th)).sum(axis=0)
        h = np.exp(0.5 * (rng.standard_normal(3)[:, None] * np.cos(np.arange(1, 4)[:, None] * th)).sum(axis=0))
        inf_v = fiber_norm_sq(g, h).value
        sup_v = fiber_norm_sq_sup(g, h)
        worst_fiber = max(worst_fiber, abs(inf_v - sup_v) / abs(inf_v))
    sg = SpatialGrid((2 * np.pi, 2 * np.pi), (32, 32))
    q1, q2 = sg.nodes
    worst_space = 0.0
    for _ in range(trials):
        c = rng.standard_normal(6)
        g = c[0] * np.cos(q1) + c[1] * np.sin(q2) + c[2] * np.cos(q1 + 2 * q2) + c[3] * np.sin(3 * q1 - q2)
        s1 = 1.0 + 0.3 * np.cos(q1 + c[4])
        s2 = 1.0 + 0.3 * np.sin(q2 + c[5])
        off = 0.2 * np.cos(q1 - q2)
        chi = np.array([[s1, off], [off, s2]])
        r = spatial_weighted_norm(g, chi, sg)
        worst_space = max(worst_space, abs(r.value - r.inf_value) / abs(r.value))
    cos_value = fiber_norm_sq(np.cos(th), 1.0).value
    ok = worst_fiber < 1e-8 and worst_space < 1e-8 and abs(cos_value - np.pi) < 1e-10
    return ok, {"fiber_rel_gap": worst_fiber, "spatial_rel_gap": worst_space, "cos_value": cos_value}


def _sweep_setup(K=64, slices=101, T=1.0):
    spec = free_abp(n=1)
    eq = solve_equilibrium(spec)
    ops = assemble_linearized(spec, eq)
    coeffs = compute_coefficients(spec, eq, ops)
    L = 2 * np.pi
    sg = SpatialGrid((L,), (K,))
    q = sg.nodes[0]
    t = np.linspace(0.0, T, slices)
    prof = 0.5 * np.cos(2 * np.pi * q / L)
    return spec, eq, coeffs, sg, t, prof


@_timed(7, "Gamma-convergence sweep", budget=180.0)
def check_gamma_sweep(eps_ladder=(0.2, 0.1, 0.05, 0.025)):
    spec, eq, coeffs, sg, t, prof = _sweep_setup()
    # a path off the diffusion flow, so I_T > 0
    base = DensityPath.local_equilibrium(t, 1 + prof[None] * np.exp(-t)[:, None], eq.G, sg)
    rep = gamma_sweep(base, spec, eq, coeffs, eps_ladder)
    k2D = (2 * np.pi / sg.extents[0]) ** 2 * coeffs.Dmat[0, 0]
    diff = DensityPath.local_equilibrium(t, 1 + prof[None] * np.exp(-k2D * t)[:, None], eq.G, sg)
    on_flow = rate_limit(diff, eq, coeffs)
    rec = build_recovery(base, eq, coeffs, 0.1)
    at01 = rate_eps(rec.path, spec, eq, epsilon=0.1)
    rel01 = abs(at01 - rep.rate_limit) / rep.rate_limit
    ok = rep.monotone and rep.order >= 0.9 and rep.sandwich and abs(on_flow) < 1e-8 and rel01 < 0.15
    return ok, {"rows": rep.rows(), "order": rep.order, "monotone": rep.monotone,
                "sandwich": rep.sandwich, "I_T": rep.rate_limit, "rate_limit_on_flow": on_flow,
                "recovery_rel_gap_eps_0.1": rel01}


@_timed(8, "Chapman-Enskog order", budget=300.0)
def check_chapman_enskog(eps_ladder=(0.2, 0.1, 0.05, 0.025)):
    spec = free_abp(n=1)
    sg = SpatialGrid((2 * np.pi,), (64,))
    rho0 = 1 + 0.5 * np.cos(sg.nodes[0])
    rep = chapman_enskog_check(spec, rho0, sg, eps_ladder)
    j = int(np.argmin(np.abs(rep.epsilons - 0.05)))
    rate_err = abs(rep.decay_rates[j] - 0.5) / 0.5
    ok = abs(rep.order - 2.0) <= 0.3 and rate_err < 0.01
    return ok, {"rows": rep.rows(), "order": rep.order, "decay_rate_rel_error": rate_err,
                "D11": float(rep.Dmat[0, 0])}


@_timed(9, "particle transport", budget=180.0)
def check_transport(N=10_000, epsilon=0.1, T=50.0, dt=0.01, seed=3):
    spec = free_abp(n=2)
    eq = solve_equilibrium(spec)
    coeffs = compute_coefficients(spec, eq)
    cfg = ParticleConfig(N=N, epsilon=epsilon, dt=dt, T=T, box=(1.0, 1.0), seed=seed)
    rep = estimate_transport(spec, cfg)
    # the estimator works in transport time eps t, where the diffusivity is eps D
    pred = epsilon * coeffs.Dmat
    band = 0.1 * np.max(np.abs(pred))
    lo, hi = rep.diffusivity_ci
    covered = bool(np.all(lo >= pred - band) and np.all(hi <= pred + band))
    point = bool(np.all(np.abs(rep.effective_diffusivity - pred) <= band))
    mean_V = spec.mean_V(eq.G)
    z = np.abs(rep.effective_drift - mean_V) / rep.drift_se
    ok = covered and point and bool(np.all(z <= 3.0))
    return ok, {"predicted": pred, "estimate": rep.effective_diffusivity, "ci_low": lo, "ci_high": hi,
                "drift": rep.effective_drift, "drift_se": rep.drift_se, "drift_z": z}


@_timed(10, "fluctuation spectrum", budget=180.0)
def check_fluctuations(Ns=(5_000, 10_000), epsilon=0.5, T=300.0, dt=0.05, seed=5):
    spec = free_abp(n=2)
    coeffs = compute_coefficients(spec)
    details, ok = {}, True
    level = {}
    for N in Ns:
        cfg = ParticleConfig(N=N, epsilon=epsilon, dt=dt, T=T, box=(1.0, 1.0), seed=seed, sample_every=0.5)
        rep = fluctuation_spectrum(spec, cfg, coeffs=coeffs)
        z = {str(k): (rep.mode_variances[k] - rep.predicted[k]) / rep.mode_se[k] for k in rep.mode_variances}
        v = np.array(list(rep.mode_variances.values()))
        s = np.array(list(rep.mode_se.values()))
        w = 1 / s**2
        level[N] = (float(np.sum(w * v) / np.sum(w)), float(np.sqrt(1 / np.sum(w))))
        details[f"N={N}"] = {"N_times_variance": {k: N * x for k, x in
                                                  zip(map(str, rep.mode_variances), v)},
                             "z": z}
        ok &= all(abs(x) <= 3.0 for x in z.values())
    (n1, (v1, s1)), (n2, (v2, s2)) = sorted(level.items())
    # 1/N scaling: v1 n1 and v2 n2 agree within 3 combined standard errors
    diff = abs(v1 * n1 - v2 * n2)
    comb = np.hypot(s1 * n1, s2 * n2)
    details["scaling_z"] = float(diff / comb)
    ok &= diff <= 3 * comb
    return ok, details


CHECKS = [check_equilibrium, check_operators, check_dissipativity, check_coefficients,
          check_identity_chain, check_hminus, check_gamma_sweep, check_chapman_enskog,
          check_transport, check_fluctuations]


def run_all(only=None, stream=None) -> list[CheckResult]:
    """Run the suite (or the numbered subset ``only``); prints a line per check to ``stream``."""
    results = []
    for num, fn in enumerate(CHECKS, start=1):
        if only and num not in only:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fn()
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return results

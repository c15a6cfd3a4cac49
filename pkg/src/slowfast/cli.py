"""Command-line entry point: ``slowfast <subcommand> [-c config.ini] [-o outdir]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure. SLOWFAST_THREADS caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as C
from .errors import ConfigError, SlowFastError
from .reports import RunManifest, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4
THREADS_ENV = "SLOWFAST_THREADS"

log = logging.getLogger("slowfast")


def _model_setup(cfg):
    from .equilibrium import solve_equilibrium

    spec = C.build_model(cfg)
    eq = solve_equilibrium(spec, tol_eq=cfg.positive("solver", "tol_eq"),
                           seed=cfg.positive("solver", "seed", int, allow_zero=True))
    return spec, eq


def _ops(cfg, spec, eq):
    from .linops import assemble_linearized

    return assemble_linearized(spec, eq, tol_op=cfg.positive("solver", "tol_op"))


def cmd_equilibrium(cfg, out, man):
    from .equilibrium import uniqueness_probe

    spec, eq = _model_setup(cfg)
    uniq = uniqueness_probe(spec, trials=4, seed=cfg.get("solver", "seed", int))
    write_csv(out / "equilibrium.csv", {"theta": spec.grid.nodes, "G": eq.G, "H": eq.H}, man)
    write_json(out / "equilibrium.json", {
        "model": spec.name, "M": spec.M, "residual": eq.residual, "iterations": eq.iterations,
        "fixed_point_residual": eq.fixed_point_residual, "contraction_estimate": eq.contraction_estimate,
        "mass": eq.mass, "min_G": float(eq.G.min()), "max_G": float(eq.G.max()), "bounds": eq.bounds,
        "uniqueness_max_distance": uniq.max_distance}, man)
    return EXIT_OK


def cmd_ops(cfg, out, man):
    spec, eq = _model_setup(cfg)
    ops = _ops(cfg, spec, eq)
    ev = np.linalg.eigvals(ops.L)
    ev = ev[np.argsort(-ev.real)]
    write_csv(out / "ops_eigenvalues.csv", {"real": ev.real, "imag": ev.imag}, man)
    write_json(out / "ops.json", {
        "model": spec.name, "kernel_residuals": ops.kernel_residuals, "kernel_dims": list(ops.kernel_dims),
        "kappa_margin": ops.kappa_margin, "fd_residual": ops.fd_residual,
        "Pi_G_L": float(np.max(np.abs(ops.Pi_G @ ops.L)))}, man)
    return EXIT_OK


def cmd_coeffs(cfg, out, man):
    from .coeffs import compute_coefficients, schur_sweep

    spec, eq = _model_setup(cfg)
    ops = _ops(cfg, spec, eq)
    c = compute_coefficients(spec, eq, ops)
    sch = schur_sweep(eq, spec, ops, trials=cfg.get("solver", "trials", int),
                      seed=cfg.get("solver", "seed", int), coeffs=c)
    cols = {"theta": spec.grid.nodes}
    for k in range(spec.n):
        cols.update({f"psi_{k}": c.psi[k], f"omega_{k}": c.omega[k], f"xi_{k}": c.xi[k],
                     f"flux_potential_{k}": c.flux_potential[k]})
    write_csv(out / "cell_functions.csv", cols, man)
    write_json(out / "coeffs.json", {
        "model": spec.name, "D": c.Dmat, "sigma": c.Sigma, "E": c.Emat, "R": c.Rmat,
        "residuals": c.residuals, "schur": {"min_eig_gap": sch.min_eig_gap,
                                            "equality_residual": sch.equality_residual,
                                            "trials": len(sch.gaps)}}, man)
    return EXIT_OK


def _rate_setup(cfg):
    from .coeffs import compute_coefficients
    from .ratefunc import DensityPath

    spec, eq = _model_setup(cfg)
    coeffs = compute_coefficients(spec, eq, _ops(cfg, spec, eq))
    sg = C.build_sgrid(cfg, spec.n)
    rho_fn = C.density_function(cfg, "rate", "rho", sg.n)
    slices = cfg.positive("rate", "slices", int)
    if slices < 3:
        raise ConfigError("rate.slices", "need at least 3 slices")
    t = np.linspace(0.0, cfg.positive("rate", "T"), slices)
    rho = np.stack([rho_fn(sg.nodes, s) for s in t])
    if np.min(rho) <= 0:
        raise ConfigError("rate.rho", "density must be positive on the grid")
    base = DensityPath.local_equilibrium(t, rho, eq.G, sg)
    return spec, eq, coeffs, base


def cmd_rate(cfg, out, man):
    from .ratefunc import build_recovery, liminf_bound, rate_eps, rate_limit

    spec, eq, coeffs, base = _rate_setup(cfg)
    eps = cfg.positive("rate", "epsilon")
    I_T, per = rate_limit(base, eq, coeffs, per_slice=True)
    rec = build_recovery(base, eq, coeffs, eps)
    I_eps, per_eps = rate_eps(rec.path, spec, eq, epsilon=eps,
                              tol_mass=cfg.positive("solver", "tol_mass"), per_slice=True)
    lb = liminf_bound(rec.path, spec, eq, coeffs, base=base, epsilon=eps)
    write_csv(out / "rate.csv", {"t": base.times, "rate_limit_density": per,
                                 "rate_eps_density": per_eps}, man)
    write_json(out / "rate.json", {"model": spec.name, "epsilon": eps, "rate_limit": I_T,
                                   "rate_eps_recovery": I_eps, "liminf_bound": lb.value,
                                   "liminf_branch": lb.branch}, man)
    return EXIT_OK


def cmd_gamma_sweep(cfg, out, man):
    from .ratefunc import gamma_sweep

    spec, eq, coeffs, base = _rate_setup(cfg)
    rep = gamma_sweep(base, spec, eq, coeffs, cfg.floats("rate", "eps_ladder"),
                      tol_mass=cfg.positive("solver", "tol_mass"))
    rows = rep.rows()
    write_csv(out / "gamma_sweep.csv", {
        "epsilon": [r["epsilon"] for r in rows], "rate_eps": [r["rate_eps"] for r in rows],
        "liminf_bound": [r["liminf_bound"] for r in rows], "rate_limit": [r["rate_limit"] for r in rows],
        "gap": [r["gap"] for r in rows], "order": [rep.order] * len(rows)}, man)
    write_json(out / "gamma_sweep.json", {"model": spec.name, "rate_limit": rep.rate_limit,
                                          "order": rep.order, "monotone": rep.monotone,
                                          "sandwich": rep.sandwich, "rows": rows}, man)
    return EXIT_OK


def cmd_kinetic(cfg, out, man):
    from .kinetic_pde import chapman_enskog_check, integrate_kinetic

    spec, eq = _model_setup(cfg)
    sg = C.build_sgrid(cfg, spec.n)
    rho0 = C.density_function(cfg, "kinetic", "rho0", sg.n)(sg.nodes, 0.0)
    if np.min(rho0) <= 0:
        raise ConfigError("kinetic.rho0", "density must be positive on the grid")
    frame = cfg.get("kinetic", "frame")
    if frame not in ("lab", "moving"):
        raise ConfigError("kinetic.frame", f"must be lab or moving, got {frame!r}")
    order = cfg.get("kinetic", "order", int)
    if order not in (1, 2):
        raise ConfigError("kinetic.order", "must be 1 or 2")
    eps = cfg.positive("kinetic", "epsilon", allow_zero=frame == "lab")
    sol = integrate_kinetic(spec, rho0[..., None] * eq.G, cfg.positive("kinetic", "T"),
                            cfg.positive("kinetic", "dt"), sg, frame=frame, epsilon=eps, eq=eq,
                            order=order, save_every=cfg.get("kinetic", "save_every", int) or None)
    rho = sol.path.marginal()
    flat = rho.reshape(rho.shape[0], -1)
    cols = {"t": np.repeat(sol.path.times, flat.shape[1])}
    for d in range(sg.n):
        cols[f"q{d + 1}" if sg.n > 1 else "q"] = np.tile(sg.nodes[d].ravel(), flat.shape[0])
    cols["rho"] = flat.ravel()
    write_csv(out / "kinetic_slices.csv", cols, man)
    report = {"model": spec.name, "frame": frame, "epsilon": eps, "dt": sol.dt, "order": order,
              "mass_drift": sol.mass_drift, "min_value": sol.min_value, "clipped": sol.clipped}
    ladder = cfg.floats("kinetic", "eps_ladder")
    if ladder:
        ce = chapman_enskog_check(spec, rho0, sg, ladder, T_diff=cfg.positive("kinetic", "T_diff"),
                                  dt=cfg.positive("kinetic", "dt"), order=order)
        report["chapman_enskog"] = {"rows": ce.rows(), "order": ce.order, "D": ce.Dmat}
    write_json(out / "kinetic.json", report, man)
    return EXIT_OK


def _checked_particles(cfg, spec):
    from .particles import dt_max

    pc = C.particle_config(cfg, spec.n)
    lim = dt_max(spec, pc.epsilon, pc.R)
    if pc.dt > lim:
        raise ConfigError("particles.dt", f"dt = {pc.dt} exceeds the stability bound {lim:.4g}")
    return pc


def cmd_simulate(cfg, out, man):
    from .particles import estimate_transport, run

    spec = C.build_model(cfg)
    pc = _checked_particles(cfg, spec)
    man.seeds.append(pc.seed)
    state, rec = run(spec, pc)
    rep = estimate_transport(spec, pc, record=rec)
    cols = {"angle": state.angles}
    for d in range(state.n):
        cols[f"q{d + 1}"] = state.positions[:, d]
    write_csv(out / "particles_final.csv", cols, man)
    np.savez_compressed(out / "trajectory.npz", schema_version=1, **rec)
    man.outputs.append(str(out / "trajectory.npz"))
    write_json(out / "transport.json", {
        "model": spec.name, "N": pc.N, "epsilon": pc.epsilon, "effective_drift": rep.effective_drift,
        "drift_se": rep.drift_se, "effective_diffusivity": rep.effective_diffusivity,
        "diffusivity_diffusive": rep.diffusivity_diffusive, "diffusivity_se": rep.diffusivity_se,
        "diffusivity_ci": rep.diffusivity_ci, "angular_histogram": rep.angular_histogram}, man)
    return EXIT_OK


def cmd_fluctuations(cfg, out, man):
    from dataclasses import replace

    from .coeffs import compute_coefficients
    from .particles import fluctuation_spectrum

    spec = C.build_model(cfg)
    pc = _checked_particles(cfg, spec)
    coeffs = compute_coefficients(spec) if spec.n else None
    modes = [tuple(int(float(x)) for x in m.split(",")) for m in cfg.raw("fluctuations", "modes").split(";")]
    if any(len(m) != max(spec.n, 1) for m in modes):
        raise ConfigError("fluctuations.modes", f"each mode needs {max(spec.n, 1)} integers")
    rows = {"N": [], "mode": [], "variance": [], "se": [], "predicted": []}
    for N in cfg.ints("fluctuations", "Ns"):
        run_cfg = replace(pc, N=N)
        man.seeds.append(run_cfg.seed)
        rep = fluctuation_spectrum(spec, run_cfg, modes=modes, coeffs=coeffs,
                                   block=cfg.get("fluctuations", "block", int))
        for m in rep.mode_variances:
            rows["N"].append(N)
            rows["mode"].append(" ".join(map(str, m)))
            rows["variance"].append(rep.mode_variances[m])
            rows["se"].append(rep.mode_se[m])
            rows["predicted"].append(rep.predicted[m])
    write_csv(out / "fluctuations.csv", rows, man)
    z = (np.array(rows["variance"]) - np.array(rows["predicted"])) / np.array(rows["se"])
    write_json(out / "fluctuations.json", {"model": spec.name, "rows": [dict(zip(rows, r)) for r in zip(*rows.values())],
                                           "max_abs_z": float(np.max(np.abs(z)))}, man)
    return EXIT_OK


def cmd_verify_all(cfg, out, man):
    from .acceptance import run_all

    only = cfg.ints("acceptance", "criteria")
    if any(c < 1 or c > 10 for c in only):
        raise ConfigError("acceptance.criteria", "criteria are numbered 1 to 10")
    results = run_all(only=set(only), stream=sys.stdout)
    write_csv(out / "acceptance.csv", {"criterion": [r.number for r in results],
                                       "name": [r.name for r in results],
                                       "passed": [int(r.passed) for r in results],
                                       "runtime_s": [r.runtime for r in results]}, man)
    write_json(out / "acceptance.json", {"results": [
        {"criterion": r.number, "name": r.name, "passed": r.passed, "runtime_s": r.runtime,
         "budget_s": r.budget, "details": r.details} for r in results]}, man)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_ACCEPT if failed else EXIT_OK


COMMANDS = {
    "equilibrium": cmd_equilibrium, "ops": cmd_ops, "coeffs": cmd_coeffs, "rate": cmd_rate,
    "gamma-sweep": cmd_gamma_sweep, "kinetic": cmd_kinetic, "simulate": cmd_simulate,
    "fluctuations": cmd_fluctuations, "verify-all": cmd_verify_all,
}


def build_parser():
    p = argparse.ArgumentParser(prog="slowfast", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("-c", "--config", help="INI config file (defaults apply to missing keys)")
        s.add_argument("-o", "--outdir", help="output directory (overrides [output] dir)")
    return p


def _thread_limit():
    val = os.environ.get(THREADS_ENV)
    if not val:
        return None
    try:
        n = int(val)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {val!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = C.load(args.config)
        out = Path(args.outdir or cfg.get("output", "dir"))
        out.mkdir(parents=True, exist_ok=True)
        limiter = _thread_limit()
        man = RunManifest(args.command, cfg.text, cfg.effective())
        man.seeds.append(cfg.get("solver", "seed", int))
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            code = COMMANDS[args.command](cfg, out, man)
        man.finish(out)
        if limiter is not None:
            limiter.restore_original_limits()
        log.info("wrote %s", ", ".join(man.outputs))
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SlowFastError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""N-particle slow-fast system: Euler-Maruyama stepping, neighbor search and estimators.

Angles follow the Ito SDE

    d theta_i = [-Gamma dU + dGamma - (1/N_i) sum_{j in V_i} Gamma F(theta_i, theta_j)] dt
                + sqrt(2 Gamma dt) xi_i,
    d q_i     = eps V(theta_i) dt,

where V_i is the set of particles within distance R of q_i (self included,
minimum-image in the periodic box) and N_i = |V_i|.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import InsufficientSamples
from .grid import AngularGrid
from .model import ModelSpec


@dataclass(frozen=True)
class ParticleConfig:
    N: int = 10_000
    R: float = 0.1
    epsilon: float = 0.1
    dt: float = 0.01
    T: float = 50.0
    burn_in: float = 0.0
    seed: int = 0
    box: tuple = (1.0,)
    M_hist: int = 64
    sample_every: float = 0.5
    bootstrap: int = 200
    window_start: float = 5.0
    tol: float = np.inf


@dataclass
class ParticleState:
    positions: np.ndarray
    angles: np.ndarray
    box: np.ndarray
    epsilon: float
    R: float
    rng_seed: int = 0
    time: float = 0.0
    displacement: np.ndarray | None = None
    neighbor_counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.angles.size

    @property
    def n(self) -> int:
        return self.box.size


def wrap_angle(theta):
    """Map to (-pi, pi]."""
    return np.pi - np.mod(np.pi - theta, 2 * np.pi)


def init_state(spec: ModelSpec, cfg: ParticleConfig, rng, angles=None, positions=None) -> ParticleState:
    box = np.asarray(cfg.box, dtype=float).reshape(-1)
    if spec.n and box.size != spec.n:
        box = np.full(spec.n, box[0])
    if positions is None:
        positions = rng.uniform(0.0, 1.0, size=(cfg.N, box.size)) * box
    if angles is None:
        angles = sample_angles(spec, cfg.N, rng)
    return ParticleState(positions=np.array(positions, dtype=float), angles=wrap_angle(np.array(angles, float)),
                         box=box, epsilon=cfg.epsilon, R=cfg.R, rng_seed=cfg.seed,
                         displacement=np.zeros((cfg.N, box.size)))


def sample_angles(spec: ModelSpec, N, rng, G=None):
    """Draw angles from an angular density on the grid (uniform by default)."""
    if G is None:
        return rng.uniform(-np.pi, np.pi, size=N)
    grid = spec.grid
    cdf = np.concatenate([[0.0], np.cumsum(G) * grid.quad_weight])
    cdf /= cdf[-1]
    edges = np.concatenate([grid.nodes - 0.5 * grid.quad_weight, [np.pi - 0.5 * grid.quad_weight]])
    return wrap_angle(np.interp(rng.uniform(size=N), cdf, edges))


# neighbor search ---------------------------------------------------------

def neighbor_matrix(positions, box, R) -> sp.csr_matrix:
    """Sparse 0/1 matrix of pairs with minimum-image distance <= R (diagonal included).

    Uses a cell list with cell edge >= R. Returns None when R covers the
    whole box, meaning every particle neighbors every other.
    """
    positions = np.asarray(positions, dtype=float)
    N, n = positions.shape
    box = np.asarray(box, dtype=float)
    if not np.isfinite(R) or R >= 0.5 * np.linalg.norm(box):
        return None
    ncell = np.maximum(np.floor(box / R).astype(int), 1)
    cell = np.minimum((positions / box * ncell).astype(int), ncell - 1)
    flat = np.ravel_multi_index(cell.T, ncell)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=int(np.prod(ncell)))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * n, indexing="ij")).reshape(n, -1).T
    rows, cols = [], []
    for off in offsets:
        nc = np.ravel_multi_index(((cell + off) % ncell).T, ncell)
        cnt = counts[nc]
        ii = np.repeat(np.arange(N), cnt)
        first = np.repeat(starts[nc], cnt)
        within = np.arange(ii.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        jj = order[first + within]
        d = positions[ii] - positions[jj]
        d -= box * np.round(d / box)
        keep = np.einsum("ij,ij->i", d, d) <= R * R
        rows.append(ii[keep])
        cols.append(jj[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(N, N))
    # with fewer than three cells along an axis the same pair is found twice
    A.data[:] = 1.0
    return A


def neighbor_matrix_kdtree(positions, box, R) -> sp.csr_matrix:
    """Reference neighbor matrix from scipy's periodic cKDTree."""
    from scipy.spatial import cKDTree

    positions = np.mod(np.asarray(positions, dtype=float), box)
    tree = cKDTree(positions, boxsize=box)
    pairs = tree.query_pairs(R * (1 + 1e-12), output_type="ndarray")
    N = positions.shape[0]
    r = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(N)])
    c = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(N)])
    return sp.csr_matrix((np.ones(r.size), (r, c)), shape=(N, N))


# forces ------------------------------------------------------------------

@dataclass(frozen=True)
class PairForce:
    """Separable Fourier form F(t, s) = Re sum c_kl (ik) e^{ikt} e^{ils}."""

    ks: np.ndarray
    ls: np.ndarray
    coef: np.ndarray  # (len(ks), len(ls)), already multiplied by ik

    def pair(self, t, s):
        et = np.exp(1j * np.multiply.outer(t, self.ks))
        es = np.exp(1j * np.multiply.outer(s, self.ls))
        return np.real(np.einsum("...k,kl,...l->...", et, self.coef, es))

    def neighbor_sum(self, theta, A):
        """sum_{j in V_i} F(theta_i, theta_j) for every i."""
        es = np.exp(1j * np.multiply.outer(theta, self.ls))
        S = A @ es if A is not None else np.broadcast_to(es.sum(axis=0), es.shape)
        et = np.exp(1j * np.multiply.outer(theta, self.ks))
        return np.real(np.einsum("ik,kl,il->i", et, self.coef, S))


def pair_force(spec: ModelSpec, rel_tol=1e-13) -> PairForce | None:
    if not spec.has_interaction:
        return None
    M = spec.M
    c = np.fft.fft2(spec.W_s) / M**2
    k = np.fft.fftfreq(M, d=1.0 / M)
    # nodes start at -pi
    c = c * np.exp(1j * np.pi * (k[:, None] + k[None, :]))
    c[np.abs(k) == M // 2, :] = 0.0
    c[:, np.abs(k) == M // 2] = 0.0
    big = np.abs(c) > rel_tol * np.max(np.abs(c))
    rows = np.where(big.any(axis=1))[0]
    cols = np.where(big.any(axis=0))[0]
    ks, ls = k[rows], k[cols]
    coef = c[np.ix_(rows, cols)] * (1j * ks)[:, None]
    return PairForce(ks=ks, ls=ls, coef=coef)


class TrigFunction:
    """Sparse trigonometric interpolant of grid samples, evaluated at arbitrary angles."""

    def __init__(self, grid: AngularGrid, samples, rel_tol=1e-13):
        samples = np.asarray(samples, dtype=float)
        c = np.fft.rfft(samples) / grid.M
        k = np.arange(c.size)
        c = c * np.exp(1j * np.pi * k)  # nodes start at -pi
        c[1:] *= 2.0
        c[-1] = 0.0  # Nyquist
        keep = np.abs(c) > rel_tol * max(np.max(np.abs(c)), np.finfo(float).tiny)
        self.k, self.c = k[keep], c[keep]

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.k.size == 0:
            return np.zeros_like(theta)
        return np.real(np.exp(1j * np.multiply.outer(theta, self.k)) @ self.c)


def dt_max(spec: ModelSpec, epsilon, R) -> float:
    g = spec.grid
    Ueff = spec.U_s - np.log(spec.Gamma_s)
    curv = float(np.max(np.abs(spec.Gamma_s * g.d_theta(g.d_theta(Ueff)))))
    vmax = float(np.max(np.abs(spec.V_s))) if spec.n else 0.0
    a = 1.0 / curv if curv > 0 else np.inf
    # the neighbor-list bound only matters when there is an interaction
    b = R / (epsilon * vmax) if epsilon * vmax > 0 and np.isfinite(R) and spec.has_interaction else np.inf
    return 0.1 * min(a, b)


class Simulator:
    """Holds per-model precomputations for repeated stepping."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.force = pair_force(spec)
        g = spec.grid
        self.drift = TrigFunction(g, -spec.Gamma_s * spec.dU + g.d_theta(spec.Gamma_s))
        self.gamma = TrigFunction(g, spec.Gamma_s)
        self.V = [TrigFunction(g, v) for v in spec.V_s]

    def velocity(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not self.V:
            return np.zeros(theta.shape + (0,))
        return np.stack([v(theta) for v in self.V], axis=-1)

    def angular_drift(self, state: ParticleState, A=None):
        th = state.angles
        drift = self.drift(th)
        gam = self.gamma(th)
        if self.force is not None:
            if A is None:
                A = neighbor_matrix(state.positions, state.box, state.R)
            if A is None:
                counts = np.full(state.N, float(state.N))
            else:
                counts = np.asarray(A.sum(axis=1)).ravel()
            state.neighbor_counts = counts
            drift = drift - gam * self.force.neighbor_sum(th, A) / counts
        return drift, gam

    def step(self, state: ParticleState, dt, rng, check_dt=True) -> ParticleState:
        spec = self.spec
        if check_dt:
            lim = dt_max(spec, state.epsilon, state.R)
            if dt > lim * (1 + 1e-12):
                raise ValueError(f"dt = {dt} exceeds the stability bound {lim:.4g}")
        drift, gam = self.angular_drift(state)
        xi = rng.standard_normal(state.N)
        # positions use the angles at the start of the step
        if state.epsilon != 0 and spec.n:
            dq = state.epsilon * self.velocity(state.angles) * dt
            state.positions = np.mod(state.positions + dq, state.box)
            state.displacement = state.displacement + dq
        state.angles = wrap_angle(state.angles + drift * dt + np.sqrt(2 * gam * dt) * xi)
        state.time += dt
        return state


def step(state: ParticleState, spec: ModelSpec, dt, rng, sim: Simulator | None = None) -> ParticleState:
    """One Euler-Maruyama step (synchronous update from the previous state)."""
    return (sim or Simulator(spec)).step(state, dt, rng)


def run(spec: ModelSpec, cfg: ParticleConfig, state: ParticleState | None = None, record=True):
    """Burn in, then integrate to T recording (time, displacement, angles) every sample_every."""
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    sim = Simulator(spec)
    if state is None:
        state = init_state(spec, cfg, rng)
    nb = int(round(cfg.burn_in / cfg.dt))
    for _ in range(nb):
        sim.step(state, cfg.dt, rng)
    state.displacement = np.zeros_like(state.positions)
    state.time = 0.0
    steps = int(round(cfg.T / cfg.dt))
    every = max(1, int(round(cfg.sample_every / cfg.dt)))
    times, disp, angles, pos = [0.0], [state.displacement.copy()], [state.angles.copy()], [state.positions.copy()]
    for k in range(1, steps + 1):
        sim.step(state, cfg.dt, rng)
        if record and k % every == 0:
            times.append(state.time)
            disp.append(state.displacement.copy())
            angles.append(state.angles.copy())
            pos.append(state.positions.copy())
    return state, dict(times=np.array(times), displacement=np.stack(disp), angles=np.stack(angles),
                       positions=np.stack(pos))


# estimators --------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorReport:
    effective_drift: np.ndarray | None = None
    drift_se: np.ndarray | None = None
    effective_diffusivity: np.ndarray | None = None  # transport time t' = eps t
    diffusivity_diffusive: np.ndarray | None = None  # diffusive time tau = eps^2 t
    diffusivity_se: np.ndarray | None = None  # for the transport-time estimate
    diffusivity_ci: np.ndarray | None = None  # (2, n, n), 95% percentile interval
    mode_variances: dict = field(default_factory=dict)
    mode_se: dict = field(default_factory=dict)
    predicted: dict = field(default_factory=dict)
    angular_histogram: np.ndarray | None = None
    confidence: dict = field(default_factory=dict)


def _msd_slope(times, disp, idx, w):
    """Least-squares slope of the displacement covariance over the window."""
    d = disp[:, idx]
    d = d - d.mean(axis=1, keepdims=True)
    cov = np.einsum("sia,sib->sab", d, d) / d.shape[1]
    t = times[w]
    tc = t - t.mean()
    return np.einsum("s,sab->ab", tc, cov[w]) / np.sum(tc**2)


def estimate_transport(spec: ModelSpec, cfg: ParticleConfig, record=None) -> EstimatorReport:
    """Drift of V and diffusivity from the MSD slope, with particle-bootstrap errors."""
    if record is None:
        _, record = run(spec, cfg)
    times, disp, angles = record["times"], record["displacement"], record["angles"]
    rng = np.random.default_rng(cfg.seed + 1)
    N = angles.shape[1]
    n = disp.shape[-1]
    # drift
    Vt = Simulator(spec).velocity(angles)
    per_particle = Vt.mean(axis=0)
    drift = per_particle.mean(axis=0)
    boots = np.array([per_particle[rng.integers(0, N, N)].mean(axis=0) for _ in range(cfg.bootstrap)])
    drift_se = boots.std(axis=0, ddof=1)
    # diffusivity
    w = times >= cfg.window_start
    if w.sum() < 3:
        raise InsufficientSamples("fewer than three samples in the MSD window")
    eps = cfg.epsilon
    slope = _msd_slope(times, disp, np.arange(N), w)
    bs = np.array([_msd_slope(times, disp, rng.integers(0, N, N), w) for _ in range(cfg.bootstrap)])
    scale = 0.5 / eps if eps > 0 else 0.0
    D_tr = 0.5 * (slope + slope.T) * scale
    bs = 0.5 * (bs + np.swapaxes(bs, 1, 2)) * scale
    se = bs.std(axis=0, ddof=1)
    ci = np.percentile(bs, [2.5, 97.5], axis=0)
    hist, _ = np.histogram(angles[-1], bins=cfg.M_hist, range=(-np.pi, np.pi), density=True)
    rel = np.max(se / np.maximum(np.abs(D_tr), 1e-300)) if np.any(D_tr) else 0.0
    if rel > cfg.tol:
        raise InsufficientSamples(f"relative standard error {rel:.3f} exceeds {cfg.tol}")
    return EstimatorReport(effective_drift=drift, drift_se=drift_se, effective_diffusivity=D_tr,
                           diffusivity_diffusive=D_tr / eps if eps > 0 else D_tr,
                           diffusivity_se=se, diffusivity_ci=ci, angular_histogram=hist,
                           confidence=dict(drift_se=drift_se, diffusivity_se=se, level=0.95, n=n))


def mode_series(positions, box, modes):
    """rho_hat_k(t) = (1/N) sum_i exp(-i k . q_i) for every recorded time; shape (S, K)."""
    kvecs = 2 * np.pi * np.asarray(modes, dtype=float) / np.asarray(box)
    phase = np.einsum("sia,ka->sik", positions, kvecs)
    return np.exp(-1j * phase).mean(axis=1)


def _block_bootstrap(x, block, B, rng):
    """Means of circular-block resamples of the time series x (S, ...)."""
    S = x.shape[0]
    nblk = max(1, S // block)
    out = []
    for _ in range(B):
        starts = rng.integers(0, S, nblk)
        idx = (starts[:, None] + np.arange(block)[None]) % S
        out.append(x[idx.ravel()].mean(axis=0))
    return np.array(out)


def fluctuation_spectrum(spec: ModelSpec, cfg: ParticleConfig, modes=None, coeffs=None,
                         record=None, block=10) -> EstimatorReport:
    """Stationary variances of density Fourier modes against (rho_bar / N) k.sigma k / k.D k."""
    n = max(spec.n, 1)
    if modes is None:
        modes = [tuple([m] + [0] * (n - 1)) for m in range(1, 5)]
    if record is None:
        _, record = run(spec, cfg)
    box = np.asarray(cfg.box, dtype=float).reshape(-1)
    if box.size != n:
        box = np.full(n, box[0])
    rho_hat = mode_series(record["positions"], box, modes)
    power = np.abs(rho_hat) ** 2
    rng = np.random.default_rng(cfg.seed + 2)
    boots = _block_bootstrap(power, block, cfg.bootstrap, rng)
    var, se = power.mean(axis=0), boots.std(axis=0, ddof=1)
    N = record["positions"].shape[1]
    rho_bar = 1.0  # particle density normalized to a probability on the box
    pred = {}
    for j, m in enumerate(modes):
        k = 2 * np.pi * np.asarray(m, float) / box
        ratio = 1.0
        if coeffs is not None:
            ratio = float(k @ coeffs.Sigma @ k) / float(k @ coeffs.Dmat @ k)
        pred[tuple(m)] = rho_bar / N * ratio
    mv = {tuple(m): float(v) for m, v in zip(modes, var)}
    ms = {tuple(m): float(s) for m, s in zip(modes, se)}
    rel = float(np.max(se / var))
    if rel > cfg.tol:
        raise InsufficientSamples(f"relative standard error {rel:.3f} exceeds {cfg.tol}")
    return EstimatorReport(mode_variances=mv, mode_se=ms, predicted=pred,
                           confidence=dict(mode_se=ms, block=block, samples=power.shape[0]))


def with_config(cfg: ParticleConfig, **changes) -> ParticleConfig:
    return replace(cfg, **changes)


@dataclass(frozen=True)
class GibbsCheck:
    statistic: float
    pvalue: float
    pairs: int


def two_particle_marginal(spec: ModelSpec, fine=4096):
    """Angular marginal of one particle of an isolated interacting pair at eps = 0.

    The pair is reversible with joint density exp(-U(t1) - U(t2) - W(t1, t2) / 2)
    when the self term F(t, t) vanishes. Returns (theta, cdf) on a fine grid.
    """
    g = spec.grid
    H1 = TrigFunction(g, spec.U_s)
    th = np.linspace(-np.pi, np.pi, fine + 1)
    force = pair_force(spec)
    tg = g.nodes
    if force is None:
        Wp = np.zeros((th.size, tg.size))
    else:
        # integrate F over the first argument to recover W up to a function of the second
        Wp = _pair_potential(spec, th, tg)
    dens = np.exp(-H1(th))[:, None] * np.exp(-spec.U_s[None] - 0.5 * Wp)
    marg = dens.sum(axis=1) * g.quad_weight
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (marg[1:] + marg[:-1]) * np.diff(th))])
    return th, cdf / cdf[-1]


def _pair_potential(spec, t, s):
    """W(t, s) from the trigonometric interpolant of the sampled pair potential."""
    M = spec.M
    c = np.fft.fft2(spec.W_s) / M**2
    k = np.fft.fftfreq(M, d=1.0 / M)
    c = c * np.exp(1j * np.pi * (k[:, None] + k[None, :]))
    c[np.abs(k) == M // 2, :] = 0.0
    c[:, np.abs(k) == M // 2] = 0.0
    et = np.exp(1j * np.multiply.outer(t, k))
    es = np.exp(1j * np.multiply.outer(s, k))
    return np.real(et @ c @ es.T)


def two_particle_gibbs_check(spec: ModelSpec, pairs=4000, T=10.0, dt=2e-3, seed=0, R=0.1) -> GibbsCheck:
    """KS test of simulated pair angles against the exact Gibbs marginal (eps = 0)."""
    from scipy.stats import kstest

    rng = np.random.Generator(np.random.Philox(seed))
    box = np.array([float(pairs)])
    centers = np.arange(pairs) + 0.5
    positions = np.repeat(centers, 2)[:, None]
    cfg = ParticleConfig(N=2 * pairs, R=R, epsilon=0.0, dt=dt, box=(float(pairs),), seed=seed)
    state = init_state(spec, cfg, rng, positions=positions)
    state.box = box
    sim = Simulator(spec)
    A = neighbor_matrix(state.positions, box, R)
    for _ in range(int(round(T / dt))):
        drift, gam = sim.angular_drift(state, A)
        state.angles = wrap_angle(state.angles + drift * dt + np.sqrt(2 * gam * dt) * rng.standard_normal(state.N))
    th, cdf = two_particle_marginal(spec)
    res = kstest(state.angles[::2], lambda x: np.interp(x, th, cdf))
    return GibbsCheck(statistic=float(res.statistic), pvalue=float(res.pvalue), pairs=pairs)

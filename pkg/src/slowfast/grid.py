"""Uniform periodic grids for the angle theta and the position q.

Both grids use Fourier collocation. First derivatives drop the Nyquist
mode, which keeps the discrete derivative skew-symmetric under the
trapezoid quadrature (discrete integration by parts holds exactly).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import NoConvergence, NonZeroMean, SingularWeight

TOL_MEAN = 1e-10
TOL_LIN = 1e-10
EPS_SPD = 1e-12


def _check_mean_zero(g, quad, tol, what="field"):
    mean = quad(g)
    scale = quad(np.abs(g))
    bad = np.abs(mean) > tol * np.maximum(scale, np.finfo(float).tiny)
    if np.any(bad):
        worst = float(np.max(np.abs(mean)))
        raise NonZeroMean(f"{what} has nonzero mean (|mean| = {worst:.3e})")


@dataclass(frozen=True)
class AngularGrid:
    """Uniform grid theta_j = -pi + 2 pi j / M on the circle."""

    M: int

    def __post_init__(self):
        if self.M < 16 or self.M % 2:
            raise ValueError(f"M must be even and >= 16, got {self.M}")

    @cached_property
    def nodes(self) -> np.ndarray:
        return -np.pi + 2 * np.pi * np.arange(self.M) / self.M

    @property
    def quad_weight(self) -> float:
        return 2 * np.pi / self.M

    @cached_property
    def _ik(self) -> np.ndarray:
        k = np.arange(self.M // 2 + 1, dtype=float)
        k[-1] = 0.0  # Nyquist
        return 1j * k

    @cached_property
    def nyquist(self) -> np.ndarray:
        """The sawtooth (-1)^j, the one grid mode invisible to d_theta."""
        return (-1.0) ** np.arange(self.M)

    def quad(self, g, axis=-1):
        """Trapezoid quadrature over theta (spectrally exact for periodic fields)."""
        return self.quad_weight * np.sum(g, axis=axis)

    def d_theta(self, g):
        """Fourier-collocation derivative along the last axis."""
        g = np.asarray(g, dtype=float)
        return np.fft.irfft(self._ik * np.fft.rfft(g, axis=-1), n=self.M, axis=-1)

    def antiderivative_theta(self, g, tol_mean=TOL_MEAN):
        """Mean-zero C with d_theta(C) = g; g must have zero quadrature mean."""
        g = np.asarray(g, dtype=float)
        _check_mean_zero(g, self.quad, tol_mean)
        gh = np.fft.rfft(g, axis=-1)
        ik = self._ik.copy()
        ik[0] = 1.0
        ik[-1] = 1.0
        ch = gh / ik
        ch[..., 0] = 0.0
        ch[..., -1] = 0.0
        return np.fft.irfft(ch, n=self.M, axis=-1)

    @cached_property
    def D1(self) -> np.ndarray:
        """Dense derivative matrix; skew-symmetric."""
        D = self.d_theta(np.eye(self.M)).T
        return 0.5 * (D - D.T)

    def drop_nyquist(self, g):
        g = np.asarray(g, dtype=float)
        return g - np.tensordot(g, self.nyquist, axes=(-1, 0))[..., None] * self.nyquist / self.M

    def reflect(self, g):
        """Samples of g(-theta) on the grid."""
        idx = (-np.arange(self.M)) % self.M
        return np.asarray(g)[..., idx]

    def fourier(self, g):
        """Complex coefficients c_k, k = -M/2+1..M/2-1, with g = sum c_k e^{ik theta}."""
        g = np.asarray(g, dtype=float)
        ch = np.fft.fft(g, axis=-1) / self.M
        k = np.fft.fftfreq(self.M, d=1.0 / self.M)
        # nodes start at -pi, shift the phase back to theta = 0
        ch = ch * np.exp(1j * k * np.pi)
        keep = np.abs(k) < self.M // 2
        return k[keep].astype(int), ch[..., keep]

    def interpolate(self, g, theta):
        """Trigonometric interpolant of grid samples evaluated at arbitrary angles."""
        k, c = self.fourier(g)
        theta = np.asarray(theta, dtype=float)
        return np.real(np.exp(1j * np.multiply.outer(theta, k)) @ c)

    def sample(self, func):
        return np.asarray(func(self.nodes), dtype=float) * np.ones(self.M)


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic tensor grid on [0, L_1) x ... x [0, L_n), n in {1, 2}."""

    extents: tuple
    counts: tuple
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(x) for x in np.atleast_1d(self.extents)))
        object.__setattr__(self, "counts", tuple(int(x) for x in np.atleast_1d(self.counts)))
        if len(self.extents) != len(self.counts) or len(self.extents) not in (1, 2):
            raise ValueError("SpatialGrid supports n = 1 or 2 with matching extents/counts")
        if any(c % 2 or c < 4 for c in self.counts):
            raise ValueError("spatial counts must be even and >= 4")

    @property
    def n(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def cell_volume(self) -> float:
        return float(np.prod([L / K for L, K in zip(self.extents, self.counts)]))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @cached_property
    def axes(self) -> list:
        return [L * np.arange(K) / K for L, K in zip(self.extents, self.counts)]

    @cached_property
    def nodes(self) -> np.ndarray:
        """Array of shape (n, *counts)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> list:
        """Per-axis wavenumbers broadcastable to the grid; Nyquist included."""
        out = []
        for d, (L, K) in enumerate(zip(self.extents, self.counts)):
            k = 2 * np.pi * np.fft.fftfreq(K, d=L / K)
            shape = [1] * self.n
            shape[d] = K
            out.append(k.reshape(shape))
        return out

    @cached_property
    def _deriv_symbols(self) -> list:
        out = []
        for d, k in enumerate(self.wavenumbers):
            kk = k.copy()
            flat = kk.reshape(-1)
            flat[self.counts[d] // 2] = 0.0
            out.append(1j * kk)
        return out

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Fourier mask: True off the mean and off every Nyquist line."""
        mask = np.ones(self.counts, dtype=bool)
        for d, K in enumerate(self.counts):
            sl = [slice(None)] * self.n
            sl[d] = K // 2
            mask[tuple(sl)] = False
        mask[(0,) * self.n] = False
        return mask

    def quad(self, f):
        """Integral over the box of the trailing spatial axes."""
        f = np.asarray(f, dtype=float)
        axes = tuple(range(f.ndim - self.n, f.ndim))
        return self.cell_volume * np.sum(f, axis=axes)

    def mean(self, f):
        return self.quad(f) / self.volume

    def partial(self, f, d):
        f = np.asarray(f, dtype=float)
        axes = tuple(range(f.ndim - self.n, f.ndim))
        # move the spatial axes to the end so the symbols broadcast
        fh = np.fft.fftn(f, axes=axes)
        return np.real(np.fft.ifftn(self._deriv_symbols[d] * fh, axes=axes))

    def grad_q(self, f):
        """Spectral gradient; output shape (n, *counts)."""
        return np.stack([self.partial(f, d) for d in range(self.n)])

    def div_q(self, v):
        """Spectral divergence of a field of shape (n, *counts)."""
        v = np.asarray(v, dtype=float)
        return sum(self.partial(v[d], d) for d in range(self.n))

    def laplacian(self, f):
        return self.div_q(self.grad_q(f))

    def project_resolved(self, f):
        """Remove the mean and the Nyquist lines."""
        fh = np.fft.fftn(f)
        return np.real(np.fft.ifftn(np.where(self.resolved_mask, fh, 0.0)))

    def shift(self, f, displacement):
        """Spectral translation: returns f(q + displacement) on the grid (trailing axes)."""
        f = np.asarray(f, dtype=float)
        axes = tuple(range(f.ndim - self.n, f.ndim))
        phase = sum(k * s for k, s in zip(self.wavenumbers, np.atleast_1d(displacement)))
        return np.real(np.fft.ifftn(np.exp(1j * phase) * np.fft.fftn(f, axes=axes), axes=axes))

    def _as_matrix_field(self, chi):
        chi = np.asarray(chi, dtype=float)
        n = self.n
        if chi.ndim == 0:
            chi = chi * np.eye(n)
        if chi.shape == (n, n):
            chi = np.broadcast_to(chi.reshape(n, n, *(1,) * n), (n, n, *self.counts))
        elif chi.shape == self.counts and n == 1:
            chi = chi[None, None]
        elif chi.shape == (n, n, *self.counts):
            pass
        elif chi.shape == self.counts:
            chi = chi[None, None] * np.eye(n).reshape(n, n, *(1,) * n)
        else:
            raise ValueError(f"cannot interpret weight of shape {chi.shape}")
        return chi

    def solve_weighted_poisson_q(self, chi, rhs, tol_mean=TOL_MEAN, tol_lin=TOL_LIN, eps_spd=EPS_SPD):
        """Mean-zero phi with div(chi grad phi) = -rhs.

        ``chi`` may be a scalar, an (n, n) matrix, a scalar field, or an
        (n, n, *counts) matrix field; it must be symmetric positive definite
        at every node.
        """
        rhs = np.asarray(rhs, dtype=float)
        _check_mean_zero(rhs, self.quad, tol_mean, what="Poisson right-hand side")
        chi = self._as_matrix_field(chi)
        n = self.n
        chi_nodes = np.moveaxis(chi.reshape(n, n, -1), -1, 0)
        chi_nodes = 0.5 * (chi_nodes + np.swapaxes(chi_nodes, 1, 2))
        min_eig = float(np.min(np.linalg.eigvalsh(chi_nodes)))
        if min_eig < eps_spd:
            raise SingularWeight(f"weight has minimum eigenvalue {min_eig:.3e}")
        b = self.project_resolved(rhs)
        if not np.any(b):
            return np.zeros(self.counts)

        chi_sym = np.moveaxis(chi_nodes, 0, -1).reshape(n, n, *self.counts)
        chi_bar = chi_sym.reshape(n, n, -1).mean(axis=-1)
        ks = self.wavenumbers
        symbol = sum(chi_bar[a, c] * ks[a] * ks[c] for a in range(n) for c in range(n))
        symbol = np.where(self.resolved_mask, symbol, np.inf)

        def const_solve(r):
            return np.real(np.fft.ifftn(np.fft.fftn(r) / symbol))

        uniform = np.allclose(chi_sym, chi_bar.reshape(n, n, *(1,) * n), rtol=0, atol=1e-14)
        if uniform:
            phi = const_solve(b)
        else:
            def apply(x):
                x = self.project_resolved(x.reshape(self.counts))
                g = self.grad_q(x)
                flux = np.einsum("ab...,b...->a...", chi_sym, g)
                return self.project_resolved(-self.div_q(flux)).ravel()

            size = int(np.prod(self.counts))
            A = LinearOperator((size, size), matvec=apply, dtype=float)
            P = LinearOperator((size, size), matvec=lambda r: const_solve(r.reshape(self.counts)).ravel(), dtype=float)
            x, info = cg(A, b.ravel(), x0=const_solve(b).ravel(), M=P, rtol=1e-14, atol=0.0, maxiter=2000)
            phi = self.project_resolved(x.reshape(self.counts))

        g = self.grad_q(phi)
        # the discrete operator acts on resolved modes; products alias into the rest
        resid = self.project_resolved(self.div_q(np.einsum("ab...,b...->a...", chi_sym, g))) + b
        rel = float(np.max(np.abs(resid)) / np.max(np.abs(b)))
        if rel > tol_lin:
            raise NoConvergence(f"weighted Poisson residual {rel:.3e} exceeds {tol_lin:.1e}")
        return phi

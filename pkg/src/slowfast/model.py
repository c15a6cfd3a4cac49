"""Microscopic/kinetic model on the circle: potentials, mobility, velocity field.

Potentials may be given as callables or as arrays sampled on the angular
grid; everything is sampled once and cached. The pair force kernel is
F(theta, theta') = d/dtheta W(theta, theta'), stored as a dense M x M matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import DegenerateVelocity, ModelError
from .grid import AngularGrid

Sampled = Union[Callable, np.ndarray, float, None]

GAMMA_MIN = 1e-8


def _sample1(grid, value, name):
    if value is None:
        return np.zeros(grid.M)
    if callable(value):
        out = np.asarray(value(grid.nodes), dtype=float)
        return np.broadcast_to(out, (grid.M,)).copy()
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.M, float(arr))
    if arr.shape != (grid.M,):
        raise ModelError(f"{name}: expected {grid.M} samples, got shape {arr.shape}")
    return arr.copy()


@dataclass(frozen=True)
class ModelSpec:
    """The slow-fast model.

    ``V`` is a sequence of n callables/arrays (one per spatial component).
    ``W`` is a callable W(theta, theta') or an M x M array; ``coupling``
    multiplies it.
    """

    M: int = 128
    U: Sampled = None
    W: Sampled = None
    Gamma: Sampled = 1.0
    V: tuple = ()
    coupling: float = 1.0
    epsilon: float = 0.1
    R: float = 0.1
    name: str = "custom"
    check_nondegenerate: bool = True
    _flags: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    @property
    def n(self) -> int:
        return len(self.V)

    @cached_property
    def grid(self) -> AngularGrid:
        return AngularGrid(self.M)

    @cached_property
    def U_s(self) -> np.ndarray:
        return _sample1(self.grid, self.U, "U")

    @cached_property
    def dU(self) -> np.ndarray:
        return self.grid.d_theta(self.U_s)

    @cached_property
    def Gamma_s(self) -> np.ndarray:
        return _sample1(self.grid, self.Gamma, "Gamma")

    @cached_property
    def V_s(self) -> np.ndarray:
        """Array of shape (n, M)."""
        if not self.V:
            return np.zeros((0, self.M))
        return np.stack([_sample1(self.grid, v, f"V[{k}]") for k, v in enumerate(self.V)])

    @cached_property
    def W_s(self) -> np.ndarray:
        """Pair potential samples (coupling included), shape (M, M)."""
        g = self.grid
        if self.W is None:
            return np.zeros((self.M, self.M))
        if callable(self.W):
            th, thp = np.meshgrid(g.nodes, g.nodes, indexing="ij")
            Ws = np.asarray(self.W(th, thp), dtype=float) * np.ones((self.M, self.M))
        else:
            Ws = np.asarray(self.W, dtype=float)
            if Ws.shape != (self.M, self.M):
                raise ModelError(f"W: expected shape ({self.M}, {self.M}), got {Ws.shape}")
        return self.coupling * Ws

    @cached_property
    def F_kernel(self) -> np.ndarray:
        return pair_force_kernel(self)

    @property
    def has_interaction(self) -> bool:
        return bool(np.any(self.F_kernel))

    def validate(self):
        gmin = float(np.min(self.Gamma_s))
        if gmin < GAMMA_MIN:
            raise ModelError(f"Gamma: must be positive on the grid (min {gmin:.3e})")
        asym = float(np.max(np.abs(self.W_s - self.W_s.T))) if self.W is not None else 0.0
        scale = max(1.0, float(np.max(np.abs(self.W_s))))
        if asym > 1e-12 * scale:
            raise ModelError(f"W: pair potential is not symmetric (max asymmetry {asym:.3e})")
        if self.epsilon < 0:
            raise ModelError("epsilon: must be non-negative")
        if self.n not in (0, 1, 2):
            raise ModelError(f"V: spatial dimension must be 1 or 2, got {self.n}")
        if self.check_nondegenerate and self.n:
            if not self.nondegenerate:
                warnings.warn(
                    f"{self.name}: derivatives of V do not span R^{self.n}; sigma will be singular",
                    DegenerateVelocity, stacklevel=3)

    @property
    def nondegenerate(self) -> bool:
        dV = self.grid.d_theta(self.V_s)
        if dV.size == 0:
            return False
        s = np.linalg.svd(dV, compute_uv=False)
        return int(np.sum(s > 1e-10 * max(1.0, s[0]))) == self.n

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def Vbar(self, G) -> np.ndarray:
        """Centered velocity V - <V>_G, shape (n, M)."""
        return self.V_s - self.mean_V(G)[:, None]

    def mean_V(self, G) -> np.ndarray:
        return self.grid.quad(self.V_s * G)


def pair_force_kernel(spec: ModelSpec) -> np.ndarray:
    """F(theta_j, theta_k) = d/dtheta W, spectral in the first argument."""
    return spec.grid.d_theta(spec.W_s.T).T


def convolve_F(spec: ModelSpec, g) -> np.ndarray:
    """F(g)(theta) = integral of F(theta, theta') g(theta') dtheta' (last axis)."""
    g = np.asarray(g, dtype=float)
    return spec.grid.quad_weight * g @ spec.F_kernel.T


# presets ---------------------------------------------------------------

def _cos_diff(a, b):
    return np.cos(a - b)


def active_2d(M=128, coupling=1.0, **kw) -> ModelSpec:
    """Planar active particles: V = (cos, sin), W = cos(theta - theta')."""
    return ModelSpec(M=M, U=None, W=_cos_diff, Gamma=1.0, V=(np.cos, np.sin),
                     coupling=coupling, name="active_2d", **kw)


def von_mises(M=128, V=(np.cos,), **kw) -> ModelSpec:
    """External potential U = cos(theta), no interaction."""
    return ModelSpec(M=M, U=np.cos, W=None, Gamma=1.0, V=V, name="von_mises", **kw)


def free_abp(M=128, n=2, **kw) -> ModelSpec:
    """Free active Brownian particles: U = W = 0, Gamma = 1."""
    V = (np.cos, np.sin)[:n]
    return ModelSpec(M=M, U=None, W=None, Gamma=1.0, V=V, name="free_abp", **kw)


PRESETS = {"active_2d": active_2d, "von_mises": von_mises, "free_abp": free_abp}

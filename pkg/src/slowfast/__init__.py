"""Slow-fast interacting diffusions on the circle.

Equilibria of the fast angular dynamics, the linearized operator and its
adjoint, transport coefficients D and sigma, weighted H^-1 norms, the
finite-epsilon and limiting rate functionals, a kinetic PDE solver and a
particle simulator with statistical estimators.
"""

from .coeffs import CoefficientSet, compute_coefficients, schur_sweep
from .equilibrium import EquilibriumState, solve_equilibrium, uniqueness_probe
from .errors import (ConfigError, DegenerateDirichletForm, EpsilonTooLarge, InsufficientSamples,
                     ModelError, NoConvergence, NonZeroMean, SingularWeight, SlowFastError, StepUnstable,
                     Unsolvable, VacuousDensity)
from .grid import AngularGrid, SpatialGrid
from .hminus import fiber_norm_sq, spatial_weighted_norm
from .kinetic_pde import chapman_enskog_check, integrate_kinetic
from .linops import LinearizedOps, assemble_linearized, dissipativity_margin
from .model import PRESETS, ModelSpec, active_2d, free_abp, von_mises
from .particles import ParticleConfig, estimate_transport, fluctuation_spectrum, run
from .ratefunc import DensityPath, build_recovery, gamma_sweep, liminf_bound, rate_eps, rate_limit

__version__ = "0.1.0"

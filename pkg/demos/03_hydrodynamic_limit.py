"""The kinetic equation approaches the diffusion equation as eps -> 0.

Starting from rho0(q) G(theta) with rho0 = 1 + cos(q)/2, we integrate the
kinetic equation in the moving frame over one unit of diffusive time and
compare the amplitude of the cos(q) mode with exp(-D t). For free active
particles the error falls like eps^2 once the initial angular layer is
resolved. The von Mises model has no theta -> theta + pi symmetry, so an
odd-derivative correction of size eps survives in the moving frame: the mode
picks up a phase of order eps while its modulus still converges like eps^2.
"""

import numpy as np

from slowfast import SpatialGrid, chapman_enskog_check, free_abp, von_mises

sg = SpatialGrid((2 * np.pi,), (32,))
rho0 = 1 + 0.5 * np.cos(sg.nodes[0])

for spec in (free_abp(n=1, M=64), von_mises(M=64)):
    rep = chapman_enskog_check(spec, rho0, sg, eps_ladder=(0.2, 0.1, 0.05, 0.025), T_diff=1.0, dt=1e-3)
    print(f"{spec.name}: predicted decay rate {rep.predicted_rate:.5f}")
    for row in rep.rows():
        print(f"  eps={row['epsilon']:.3f}  error={row['error']:.2e}  measured rate={row['decay_rate']:.5f}")
    print(f"  fitted order {rep.order:.2f}")
print("von Mises error is first order: a phase drift, see the module docstring")

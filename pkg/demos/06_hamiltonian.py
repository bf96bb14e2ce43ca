"""
Stochastic Hamiltonian system
=============================

A quadratic Hamiltonian with linear forcing. The structural checks pass, the
zero-noise run matches the two-point boundary value problem, and the noisy
ensemble mean stays within a few standard errors of it.
"""
import numpy as np

from dsde_lab.experiments import DEMO_HAMILTONIAN, hamiltonian_demo
from dsde_lab.fbdsdep import HomotopyConfig
from dsde_lab.randomness import MarkSpace, make_grid, sample_ensemble, zero_ensemble

_, det, _ = hamiltonian_demo(DEMO_HAMILTONIAN, zero_ensemble(make_grid(1.0, 64)),
                             HomotopyConfig(inner_tol=1e-10))
print("violations:", det.monotonicity_violations, det.boundary_violations, det.lipschitz_violations)
print("zero-noise max error vs BVP:", det.max_error)

nz = sample_ensemble(make_grid(1.0, 32), 1, 1, MarkSpace.single(1.0), seed=0, paths=200, replicates=64)
_, rep, trace = hamiltonian_demo(DEMO_HAMILTONIAN, nz)
print("noisy max |mean - BVP| / stderr:", rep.max_zscore())
ts = nz.grid.nodes
for i in range(0, len(ts), 8):
    print(f"t={ts[i]:.2f}  E X={rep.mean_X[i]:+.4f} (BVP {rep.bvp[i, 0]:+.4f})  "
          f"E P={rep.mean_P[i]:+.4f} (BVP {rep.bvp[i, 1]:+.4f})")

"""
Noise ensembles and the discrete Ito calculus
=============================================

Forward (W), backward (B) and compensated Poisson noise on a uniform grid, the
left/right point stochastic sums, and the exact discrete energy identity.
"""
import numpy as np

from dsde_lab.calculus import (SemimartingaleDecomposition, accumulate, backward_ito,
                               energy_identity_residual, forward_ito)
from dsde_lab.randomness import MarkSpace, make_grid, sample_ensemble, sample_noise

grid = make_grid(1.0, 50)
marks = MarkSpace(("small", "large"), (2.0, 0.5))

# a product ensemble: 20000 (W, N) paths crossed with 1 B path
nz = sample_ensemble(grid, d=1, l=1, marks=marks, seed=0, paths=20_000)
W = nz.W_path()
print("E W_T ~", W[:, -1, 0].mean(), " Var W_T ~", W[:, -1, 0].var())

# Ito isometry for int W dW with a left-point sum
I = forward_ito(W, nz.dW)
print("E (int W dW)^2 ~", np.mean(I**2), " exact", np.sum(grid.nodes[:-1]) * grid.dt)

# backward integrals use the right end point
b = sample_noise(grid, 1, 1, marks, seed=1)
B = np.concatenate([[0.0], np.cumsum(b.dB[:, 0])])
print("sum B_{i+1} dB_i =", backward_ito(B, b.dB[:, 0]),
      " = (B_T^2 + sum dB^2) / 2 =", (B[-1] ** 2 + np.sum(b.dB**2)) / 2)

# the energy identity holds to round-off for any mixed decomposition
rng = np.random.default_rng(2)
n1 = grid.N + 1
dec = SemimartingaleDecomposition(rng.normal(size=2), rng.normal(size=(n1, 2)),
                                  rng.normal(size=(n1, 2, 1)), rng.normal(size=(n1, 2, 1)),
                                  rng.normal(size=(n1, 2, 2)))
path = accumulate(dec, b)
print("energy identity residual:", energy_identity_residual(dec, b, path))

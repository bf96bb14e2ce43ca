"""Parameter-continuity study and the quadratic doubly stochastic Hamiltonian system."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .coeffs import (CoefficientSystem, check_boundary_monotonicity, check_lipschitz,
                     check_monotonicity)
from .errors import DSDEError, InvalidArgumentError, InvalidHamiltonianError
from .fbdsdep import (HomotopyConfig, QuintupleSolution, SolverConfig, boundary_residuals,
                      solution_distance, solve_fbdsdep)
from .randomness import NO_MARKS, MarkSpace, NoiseEnsemble


# ---------------------------------------------------------------------------
# linear two-point boundary value oracle


def linear_bvp(A, c, k0: float, c0: float, kT: float, cT: float, T: float, ts) -> np.ndarray:
    """Solve (x, p)' = A (x, p) + c with x(0) = k0 p(0) + c0 and p(T) = kT x(T) + cT.

    Returns an array (len(ts), 2) by the matrix exponential of the affine system.
    """
    Aug = np.zeros((3, 3))
    Aug[:2, :2] = A
    Aug[:2, 2] = c
    E = expm(Aug * T)

    def end(p0):
        z = E @ np.array([k0 * p0 + c0, p0, 1.0])
        return z[1] - kT * z[0] - cT

    r0, r1 = end(0.0), end(1.0)
    if r1 == r0:
        raise InvalidArgumentError("boundary value problem is singular")
    p0 = -r0 / (r1 - r0)
    z0 = np.array([k0 * p0 + c0, p0, 1.0])
    return np.array([(expm(Aug * t) @ z0)[:2] for t in np.asarray(ts, dtype=float)])


# ---------------------------------------------------------------------------
# continuity


@dataclass
class ParameterFamily:
    baseline: CoefficientSystem
    perturb: Callable[[float], CoefficientSystem]
    alphas: tuple = (0.1, 0.01, 0.001)

    def __post_init__(self):
        a = list(self.alphas)
        if any(x <= 0 for x in a) or any(x <= y for x, y in zip(a, a[1:])):
            raise InvalidArgumentError("alphas must be positive and strictly decreasing")

    def member(self, alpha: float) -> CoefficientSystem:
        return self.baseline if alpha == 0 else self.perturb(alpha)


def additive_drift_family(baseline: CoefficientSystem, alphas=(0.1, 0.01, 0.001)) -> ParameterFamily:
    """f_alpha = f + alpha (every component)."""
    def perturb(alpha):
        f0 = baseline.f
        return replace(baseline, f=lambda t, *U: f0(t, *U) + alpha, name=f"{baseline.name}+{alpha:g}")
    return ParameterFamily(baseline, perturb, tuple(alphas))


@dataclass
class ContinuityRow:
    alpha: float
    distance: float
    error: Optional[str] = None


@dataclass
class ContinuityTable:
    rows: list = field(default_factory=list)

    @property
    def distances(self):
        return [r.distance for r in self.rows]

    def strictly_decreasing(self) -> bool:
        d = self.distances
        return all(np.isfinite(d)) and all(a > b for a, b in zip(d, d[1:]))

    def quadratic_spread(self) -> float:
        """max / min of distance / alpha^2."""
        q = [r.distance / r.alpha**2 for r in self.rows if np.isfinite(r.distance)]
        return max(q) / min(q) if q and min(q) > 0 else np.inf


def continuity_study(family: ParameterFamily, noise: NoiseEnsemble,
                     homotopy: HomotopyConfig = HomotopyConfig(inner_tol=1e-13),
                     cfg: SolverConfig = SolverConfig()) -> ContinuityTable:
    """Distance between the solution at each alpha and the baseline solution,
    all on the same noise sample."""
    U0, _ = solve_fbdsdep(family.baseline, noise, homotopy, cfg)
    table = ContinuityTable()
    for a in family.alphas:
        try:
            Ua, _ = solve_fbdsdep(family.member(a), noise, homotopy, cfg)
            table.rows.append(ContinuityRow(a, solution_distance(Ua, U0)))
        except DSDEError as exc:
            table.rows.append(ContinuityRow(a, float("nan"), f"{type(exc).__name__}: {exc}"))
    return table


# ---------------------------------------------------------------------------
# Hamiltonian system


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """H = b/2 (X^2 + Y^2) - a/2 (P^2 + Q^2 + |K|^2) + linear forcing.

    Forcing: + e_P P + s_Q Q + s_K K + e_X X + s_Y Y; boundary potentials
    phi(X) = X^2/2 + phi1 X (convex) and psi(P) = -P^2/2 + psi1 P (concave).
    """

    a: float = 0.5
    b: float = 0.5
    e_P: float = 0.0
    e_X: float = 0.0
    s_Q: float = 0.0
    s_Y: float = 0.0
    s_K: float = 0.0
    psi1: float = 0.0
    phi1: float = 0.0

    def value(self, X, P, Y, Q, K):
        return (0.5 * self.b * (X**2 + Y**2) - 0.5 * self.a * (P**2 + Q**2 + K**2)
                + self.e_P * P + self.s_Q * Q + self.s_K * K + self.e_X * X + self.s_Y * Y)

    def hessian_fd(self, z, h: float = 1e-4) -> np.ndarray:
        """Central-difference Hessian in the order (X, P, Y, Q, K)."""
        z = np.asarray(z, dtype=float)
        H = np.empty((5, 5))
        e = np.eye(5) * h
        for i in range(5):
            for j in range(5):
                H[i, j] = (self.value(*(z + e[i] + e[j])) - self.value(*(z + e[i] - e[j]))
                           - self.value(*(z - e[i] + e[j])) + self.value(*(z - e[i] - e[j]))) / (4 * h * h)
        return H


def build_hamiltonian_system(ham: QuadraticHamiltonian, d: int = 1, l: int = 1,
                             marks: MarkSpace = NO_MARKS) -> CoefficientSystem:
    """Scalar system f = H_P, g = H_Q, h = H_K, F = -H_X, G = -H_Y, Psi = psi', Phi = phi'.

    Forcing constants on Q, Y and K apply to every noise component and mark.
    """
    a, b = ham.a, ham.b
    if not (np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0):
        raise InvalidHamiltonianError(f"need a > 0 and b > 0, got a={a}, b={b}")
    if a >= 1:
        raise InvalidHamiltonianError(f"need a < 1 so that g and h have Q/K-slope below 1, got a={a}")

    def f(t, X, P, Y, Q, K):
        return -a * P + ham.e_P

    def g(t, X, P, Y, Q, K):
        return -a * Q + ham.s_Q

    def h(t, X, P, Y, Q, K):
        return -a * K + ham.s_K

    def F(t, X, P, Y, Q, K):
        return -b * X - ham.e_X

    def G(t, X, P, Y, Q, K):
        return -b * Y - ham.s_Y

    def Psi(P):
        return -P + ham.psi1

    def Phi(X):
        return X + ham.phi1

    return CoefficientSystem(
        n=1, m=1, d=d, l=l, f=f, g=g, h=h, F=F, G=G, Psi=Psi, Phi=Phi, H=np.eye(1), marks=marks,
        mu1=b, mu2=a, beta1=1.0, beta2=1.0, c=max(1.0, a * a, b * b), gamma=0.5,
        deterministic=True, name="hamiltonian", params=dict(vars(ham)))


def hamiltonian_bvp(ham: QuadraticHamiltonian, T: float, ts) -> np.ndarray:
    """Mean dynamics: X' = -aP + e_P, P' = -bX - e_X, X(0) = -P(0) + psi1, P(T) = X(T) + phi1."""
    A = np.array([[0.0, -ham.a], [-ham.b, 0.0]])
    return linear_bvp(A, np.array([ham.e_P, -ham.e_X]), -1.0, ham.psi1, 1.0, ham.phi1, T, ts)


@dataclass
class HamiltonianReport:
    monotonicity_violations: int
    boundary_violations: int
    lipschitz_violations: int
    boundary_residuals: tuple
    final_alpha: float
    max_ratio: float
    mean_X: np.ndarray
    mean_P: np.ndarray
    stderr_X: np.ndarray
    stderr_P: np.ndarray
    bvp: np.ndarray  # (N+1, 2)

    @property
    def max_error(self) -> float:
        return float(max(np.abs(self.mean_X - self.bvp[:, 0]).max(),
                         np.abs(self.mean_P - self.bvp[:, 1]).max()))

    def max_zscore(self) -> float:
        zx = np.abs(self.mean_X - self.bvp[:, 0]) / np.maximum(self.stderr_X, 1e-300)
        zp = np.abs(self.mean_P - self.bvp[:, 1]) / np.maximum(self.stderr_P, 1e-300)
        return float(max(zx.max(), zp.max()))

    def rows(self, ts):
        for i, t in enumerate(ts):
            yield (t, self.mean_X[i], self.mean_P[i], self.bvp[i, 0], self.bvp[i, 1])


def ensemble_mean(A: np.ndarray):
    """Mean over (R, M) cells and its standard error for a product ensemble.

    The variance combines the path and replicate factors,
    Var_p(mean_r A) / M + Var_r(mean_p A) / R.
    """
    R, M = A.shape[:2]
    mean = A.mean(axis=(0, 1))
    var = np.zeros_like(mean)
    if M > 1:
        var = var + A.mean(axis=0).var(axis=0, ddof=1) / M
    if R > 1:
        var = var + A.mean(axis=1).var(axis=0, ddof=1) / R
    return mean, np.sqrt(var)


def hamiltonian_demo(ham: QuadraticHamiltonian, noise: NoiseEnsemble,
                     homotopy: HomotopyConfig = HomotopyConfig(), cfg: SolverConfig = SolverConfig(),
                     n_samples: int = 300):
    """Check the structural conditions, solve, and compare means with the BVP."""
    sys = build_hamiltonian_system(ham, noise.d, noise.l, noise.marks)
    mono = check_monotonicity(sys, n_samples)
    psi_rep, phi_rep = check_boundary_monotonicity(sys, n_samples)
    lip = check_lipschitz(sys, n_samples)
    U, trace = solve_fbdsdep(sys, noise, homotopy, cfg)
    mX, sX = ensemble_mean(U.X[..., 0])
    mP, sP = ensemble_mean(U.P[..., 0])
    ratios = [r for s in trace.steps for r in s.ratios if np.isfinite(r)]
    report = HamiltonianReport(
        mono.violation_count, psi_rep.violation_count + phi_rep.violation_count,
        sum(r.violation_count for r in lip.values()),
        boundary_residuals(sys, U), trace.final_alpha, max(ratios) if ratios else float("nan"),
        mX, mP, sX, sP, hamiltonian_bvp(ham, noise.grid.T, noise.grid.nodes))
    return U, report, trace


DEMO_HAMILTONIAN = QuadraticHamiltonian(a=0.5, b=0.5, e_P=1.0, psi1=0.5, s_Q=0.3, s_Y=0.2, s_K=0.2)

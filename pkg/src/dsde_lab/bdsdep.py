"""Backward doubly stochastic equations with jumps, solved by backward induction
with least-squares regression for the conditional expectations.

Regressions run independently per *group*: for a product noise ensemble the
groups are the B replicates, so within a group the backward motion is frozen
and the conditional expectation reduces to a classical one over the (W, N)
samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Optional

import numpy as np

from .errors import InsufficientPathsError, InvalidDataError, NumericalBlowupError, ShapeMismatchError
from .randomness import MarkSpace, NoiseEnsemble, NO_MARKS


@dataclass(frozen=True)
class RegressionConfig:
    degree: int = 2
    ridge: float = 1e-8
    min_paths_per_coefficient: int = 2
    # leave-one-out fits for the martingale integrands (Q, K); removes the
    # self-inclusion correlation between a path's estimate and its own increment
    loo_integrands: bool = True

    def __post_init__(self):
        if self.degree < 0 or self.ridge < 0 or self.min_paths_per_coefficient < 1:
            raise ValueError(f"invalid regression config {self}")


def _monomials(k: int, degree: int):
    terms = [()]
    for deg in range(1, degree + 1):
        terms.extend(combinations_with_replacement(range(k), deg))
    return terms


def _basis(z: np.ndarray, terms) -> np.ndarray:
    cols = [np.ones(z.shape[:-1])]
    for term in terms[1:]:
        col = z[..., term[0]]
        for idx in term[1:]:
            col = col * z[..., idx]
        cols.append(col)
    return np.stack(cols, axis=-1)


class GroupedRegressor:
    """Polynomial least squares fitted once per step and reused for several targets.

    ``features`` has shape (G, S, k). Features are standardized per group;
    columns constant within a group contribute nothing.
    """

    def __init__(self, features: np.ndarray, cfg: RegressionConfig):
        if not np.all(np.isfinite(features)):
            raise InvalidDataError("non-finite regression features")
        self.cfg = cfg
        G, S, k = features.shape
        self.S = S
        mean = features.mean(axis=1, keepdims=True)
        std = features.std(axis=1, keepdims=True)
        live = std > 1e-12 * (1.0 + np.abs(mean))
        self.mean, self.scale, self.live = mean, np.where(live, std, 1.0), live
        z = np.where(live, (features - mean) / self.scale, 0.0)
        self.terms = _monomials(k, cfg.degree)
        A = _basis(z, self.terms)
        p = A.shape[-1]
        n_live = int(live.sum(axis=-1).max()) if k else 0
        p_eff = len(_monomials(n_live, cfg.degree))
        if p_eff > 1 and S < cfg.min_paths_per_coefficient * p_eff:
            raise InsufficientPathsError(
                f"{S} paths per group for {p_eff} basis functions "
                f"(need {cfg.min_paths_per_coefficient * p_eff})")
        pen = np.full(p, cfg.ridge * S)
        pen[0] = 0.0
        # dead columns are identically zero; unit penalty keeps the system regular
        dead = np.all(A == 0.0, axis=1)
        gram = np.einsum("gsp,gsq->gpq", A, A)
        gram[:, np.arange(p), np.arange(p)] += pen + dead
        self.A = A
        self.gram = gram
        self.cond = float(np.max(np.linalg.cond(gram[:8]))) if p > 1 else 1.0

    def leverage(self) -> np.ndarray:
        if not hasattr(self, "_lev"):
            inv = np.linalg.inv(self.gram)
            self._lev = np.einsum("gsp,gpq,gsq->gs", self.A, inv, self.A)
        return self._lev

    def fit_loo(self, targets: np.ndarray) -> np.ndarray:
        """Leave-one-out fitted values (y_s predicted without sample s)."""
        targets = np.broadcast_to(targets, self.A.shape[:2] + targets.shape[2:])
        fitted, _ = self.fit(targets)
        h = np.minimum(self.leverage(), 1 - 1e-3)[..., None]
        loo = (fitted - h * targets) / (1 - h)
        flat = np.ptp(targets, axis=1, keepdims=True) == 0.0
        return np.where(flat, targets, loo)

    def fit(self, targets: np.ndarray):
        """Return (fitted, coefficients) for targets shaped (G or 1, S, q)."""
        targets = np.broadcast_to(targets, self.A.shape[:2] + targets.shape[2:])
        if not np.all(np.isfinite(targets)):
            raise InvalidDataError("non-finite regression targets")
        rhs = np.einsum("gsp,gsq->gpq", self.A, targets)
        coef = np.linalg.solve(self.gram, rhs)
        fitted = np.einsum("gsp,gpq->gsq", self.A, coef)
        flat = np.ptp(targets, axis=1, keepdims=True) == 0.0
        return np.where(flat, targets, fitted), coef

    def predict(self, coef: np.ndarray, features: np.ndarray) -> np.ndarray:
        z = np.where(self.live, (features - self.mean) / self.scale, 0.0)
        return np.einsum("gsp,gpq->gsq", _basis(z, self.terms), coef)


@dataclass
class RegressionResult:
    fitted: np.ndarray
    coefficients: np.ndarray
    r2: np.ndarray
    condition: float
    _reg: GroupedRegressor = field(repr=False, default=None)

    def predict(self, features) -> np.ndarray:
        f = np.asarray(features, dtype=float)
        f = f.reshape(1, -1, self._reg.mean.shape[-1])
        return self._reg.predict(self.coefficients[None], f)[0]

    def raw_coefficients(self, features) -> np.ndarray:
        """Coefficients in the raw monomial basis (1, x, x^2, ...) of the given features."""
        f = np.asarray(features, dtype=float).reshape(len(self.fitted), -1)
        A = _basis(f, self._reg.terms)
        return np.linalg.lstsq(A, self.fitted, rcond=None)[0]


def regress_conditional(targets, features, cfg: RegressionConfig = RegressionConfig()) -> RegressionResult:
    """Least-squares projection of per-path ``targets`` on polynomials of ``features``."""
    y = np.asarray(targets, dtype=float)
    y = y[:, None] if y.ndim == 1 else y
    x = np.asarray(features, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    if len(x) != len(y):
        raise ShapeMismatchError("targets and features must have the same number of paths")
    reg = GroupedRegressor(x[None], cfg)
    fitted, coef = reg.fit(y[None])
    resid = y - fitted[0]
    var = np.var(y, axis=0)
    r2 = np.where(var > 0, 1.0 - np.mean(resid**2, axis=0) / np.where(var > 0, var, 1.0), 1.0)
    return RegressionResult(fitted[0], coef[0], r2, reg.cond, reg)


# ---------------------------------------------------------------------------
# backward sweep


@dataclass
class SweepDiagnostics:
    r2: list = field(default_factory=list)
    condition: list = field(default_factory=list)


def backward_sweep(terminal, features, dW, dN, rates, dB, dt, driver_f, driver_g,
                   cfg: RegressionConfig, d: int, l: int):
    """Backward induction on grouped arrays.

    Shapes: terminal (G, S, m); features (G, S, N+1, k); dW (., ., N, d),
    dN compensated (., ., N, J), dB (., ., N, l), all broadcastable to (G, S, ...).
    ``driver_f(i, P, Q, K)`` -> (G, S, m) at node i,
    ``driver_g(i, P, Q, K)`` -> (G, S, m, l) at node i (called with i + 1).

    Per step:  Q_i = E[e dW_i]/dt,  K_ij = E[e dN_ij]/(lambda_j dt)  with e the
    residual of P_{i+1} after projection (leave-one-out fits by default), then
    P_i = E[P_{i+1} - G(t_{i+1}) dB_i] - F(t_i, Phat, Q_i, K_i) dt.
    """
    G, S, m = terminal.shape
    N = features.shape[2] - 1
    rates = np.asarray(rates, dtype=float)
    J = rates.size
    P = np.empty((G, S, N + 1, m))
    Q = np.zeros((G, S, N + 1, m, d))
    K = np.zeros((G, S, N + 1, m, J))
    P[:, :, N] = terminal
    diag = SweepDiagnostics()
    for i in range(N - 1, -1, -1):
        Pn = P[:, :, i + 1]
        reg = GroupedRegressor(features[:, :, i], cfg)
        Pfit, _ = reg.fit(Pn)
        e = Pn - Pfit
        if d or J:
            prods = []
            if d:
                prods.append((e[..., :, None] * dW[..., i, None, :]).reshape(G, S, m * d))
            if J:
                prods.append((e[..., :, None] * dN[..., i, None, :]).reshape(G, S, m * J))
            prods = np.concatenate(prods, axis=-1)
            fit = reg.fit_loo(prods) if cfg.loo_integrands else reg.fit(prods)[0]
            if d:
                Q[:, :, i] = fit[..., : m * d].reshape(G, S, m, d) / dt
            if J:
                K[:, :, i] = fit[..., m * d:].reshape(G, S, m, J) / (rates * dt)
        target = Pn
        if l:
            Gv = driver_g(i + 1, Pn, Q[:, :, i], K[:, :, i])
            target = Pn - np.einsum("gsml,gsl->gsm", Gv, np.broadcast_to(dB[..., i, :], (G, S, l)))
        Phat, _ = reg.fit(target)
        P[:, :, i] = Phat - driver_f(i, Phat, Q[:, :, i], K[:, :, i]) * dt
        if not np.all(np.isfinite(P[:, :, i])):
            raise NumericalBlowupError(f"non-finite value at step {i}", step=i)
        var = np.var(target, axis=1)
        res = np.mean((target - Phat) ** 2, axis=1)
        diag.r2.append(float(np.mean(np.where(var > 0, 1 - res / np.where(var > 0, var, 1), 1.0))))
        diag.condition.append(reg.cond)
    Q[:, :, N] = Q[:, :, N - 1]
    K[:, :, N] = K[:, :, N - 1]
    diag.r2.reverse()
    diag.condition.reverse()
    return P, Q, K, diag


# ---------------------------------------------------------------------------
# public problem / solution types


@dataclass
class BackwardProblem:
    """dP = F dt + G dB + Q dW + int K dN~,  P_T = xi.

    ``terminal`` is an array (R, M, m) or a callable ``noise -> array``.
    ``driver_f(t, P, Q, K)`` and ``driver_g(t, P, Q, K)`` are vectorized over
    leading axes. ``features`` (R, M, N+1, k) default to the W and compensated
    counting paths.
    """

    terminal: object
    m: int
    driver_f: Optional[Callable] = None
    driver_g: Optional[Callable] = None
    features: Optional[np.ndarray] = None
    marks: MarkSpace = NO_MARKS


@dataclass
class BackwardSolution:
    P: np.ndarray  # (R, M, N+1, m)
    Q: np.ndarray  # (R, M, N+1, m, d)
    K: np.ndarray  # (R, M, N+1, m, J)
    r2: list
    condition: list


def default_features(noise: NoiseEnsemble) -> np.ndarray:
    R, M = noise.replicates, noise.paths
    parts = [noise.W_path(), noise.Ntilde_path()]
    f = np.concatenate(parts, axis=-1)
    return np.broadcast_to(f[None], (R,) + f.shape)


def solve_backward(problem: BackwardProblem, noise: NoiseEnsemble,
                   cfg: RegressionConfig = RegressionConfig()) -> BackwardSolution:
    """Solve the backward equation on every cell of a product noise ensemble."""
    grid = noise.grid
    R, M, N = noise.replicates, noise.paths, grid.N
    m = problem.m
    xi = problem.terminal(noise) if callable(problem.terminal) else problem.terminal
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (R, M, m))
    if not np.all(np.isfinite(xi)):
        raise InvalidDataError("terminal value is not finite")
    feats = problem.features if problem.features is not None else default_features(noise)
    feats = np.asarray(feats, dtype=float)
    if feats.ndim == 3:
        feats = feats[..., None]
    feats = np.broadcast_to(feats, (R, M, N + 1, feats.shape[-1]))
    if problem.marks.J and problem.marks != noise.marks:
        raise ShapeMismatchError("problem marks differ from noise marks")
    d, l = noise.d, noise.l
    zero_f = lambda t, P, Q, K: np.zeros_like(P)  # noqa: E731
    fF = problem.driver_f or zero_f
    fG = problem.driver_g or (lambda t, P, Q, K: np.zeros(P.shape + (l,)))
    nodes = grid.nodes

    P, Q, K, diag = backward_sweep(
        xi, feats, noise.cell_dW, noise.cell_dN, noise.marks.lam, noise.cell_dB, grid.dt,
        lambda i, P, Q, K: np.broadcast_to(fF(nodes[i], P, Q, K), P.shape),
        lambda i, P, Q, K: np.broadcast_to(fG(nodes[i], P, Q, K), P.shape + (l,)),
        cfg, d, l)
    return BackwardSolution(P, Q, K, diag.r2, diag.condition)

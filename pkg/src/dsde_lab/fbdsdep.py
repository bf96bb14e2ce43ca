"""Fully coupled forward-backward doubly stochastic systems with jumps, solved by
the method of continuation.

The homotopy parameter alpha runs from the decoupled system (alpha = 0) to the
target system (alpha = 1). Each advance alpha0 -> alpha0 + delta is the fixed
point of a map Ubar -> U, where U solves the alpha0-system with delta-scaled
terms evaluated at Ubar. The alpha0-system itself is solved by a relaxed
fixed-point lag on its own alpha0-weighted coefficients.

Array layout for an ensemble quintuple (R B-replicates x M (W, N)-paths):
X (R, M, N+1, n), P (R, M, N+1, m), Y (R, M, N+1, n, l),
Q (R, M, N+1, m, d), K (R, M, N+1, m, J).

Conventions: dt and dW/jump integrals take left nodes, dB integrals right
nodes. Y lives on nodes 1..N (node 0 repeats node 1); Q and K live on nodes
0..N-1 (node N repeats node N-1).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bdsdep import RegressionConfig, backward_sweep
from .coeffs import CoefficientSystem, State
from .errors import ContinuationFailure, InvalidArgumentError, MapDivergenceError, ShapeMismatchError
from .randomness import NoiseEnsemble

log = logging.getLogger(__name__)

M_GT_N = "mGTn"
M_LT_N = "mLTn"


@dataclass
class QuintupleSolution:
    X: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    noise: Optional[NoiseEnsemble] = field(default=None, repr=False, compare=False)

    @property
    def parts(self):
        return (self.X, self.P, self.Y, self.Q, self.K)

    def node(self, i: int) -> State:
        return State(*(a[:, :, i] for a in self.parts))

    def blend(self, other: "QuintupleSolution", w: float) -> "QuintupleSolution":
        """w * self + (1 - w) * other."""
        if w == 1.0:
            return self
        return QuintupleSolution(*(w * a + (1 - w) * b for a, b in zip(self.parts, other.parts)),
                                 noise=self.noise)

    @classmethod
    def zeros(cls, sys: CoefficientSystem, noise: NoiseEnsemble) -> "QuintupleSolution":
        R, M, N1 = noise.replicates, noise.paths, noise.grid.N + 1
        z = sys.zeros((R, M, N1))
        return cls(*z, noise=noise)

    def mean_path(self, name: str) -> np.ndarray:
        return getattr(self, name).mean(axis=(0, 1))


def solution_distance(U: QuintupleSolution, V: QuintupleSolution, marks=None, dt=None) -> float:
    """E int_0^T (|dX|^2+|dP|^2+|dY|^2+|dQ|^2+||dK||^2) dt + E|dX_T|^2 + E|dP_0|^2.

    Time integrals are left-point sums over nodes 0..N-1; E is the cell average.
    """
    for a, b in zip(U.parts, V.parts):
        if a.shape != b.shape:
            raise ShapeMismatchError(f"solution shapes differ: {a.shape} vs {b.shape}")
    noise = U.noise if U.noise is not None else V.noise
    if marks is None:
        marks = noise.marks
    if dt is None:
        dt = noise.grid.dt
    dX, dP, dY, dQ, dK = (a - b for a, b in zip(U.parts, V.parts))
    lam = marks.lam
    integrand = (np.sum(dX[:, :, :-1] ** 2, axis=-1) + np.sum(dP[:, :, :-1] ** 2, axis=-1)
                 + np.sum(dY[:, :, :-1] ** 2, axis=(-1, -2)) + np.sum(dQ[:, :, :-1] ** 2, axis=(-1, -2))
                 + np.einsum("rsimj,j->rsi", dK[:, :, :-1] ** 2, lam))
    total = (integrand.sum(axis=-1) * dt + np.sum(dX[:, :, -1] ** 2, axis=-1)
             + np.sum(dP[:, :, 0] ** 2, axis=-1))
    return float(total.mean())


@dataclass
class SourceTerms:
    """Free data of the continuation family; arrays broadcast to the cell layout."""

    F0: object = 0.0
    f0: object = 0.0
    G0: object = 0.0
    g0: object = 0.0
    h0: object = 0.0
    psi: object = 0.0
    phi: object = 0.0

    def expand(self, sys: CoefficientSystem, noise: NoiseEnsemble) -> "SourceTerms":
        R, M, N1 = noise.replicates, noise.paths, noise.grid.N + 1
        shapes = dict(F0=(sys.m,), f0=(sys.n,), G0=(sys.m, sys.l), g0=(sys.n, sys.d),
                      h0=(sys.n, sys.J))
        out = {}
        for k, tail in shapes.items():
            out[k] = np.broadcast_to(np.asarray(getattr(self, k), dtype=float), (R, M, N1) + tail)
        out["psi"] = np.broadcast_to(np.asarray(self.psi, dtype=float), (R, M, sys.n))
        out["phi"] = np.broadcast_to(np.asarray(self.phi, dtype=float), (R, M, sys.m))
        return SourceTerms(**out)


@dataclass
class HomotopyConfig:
    delta_init: float = 0.25
    theta: float = 0.5
    max_inner: int = 200
    inner_tol: float = 1e-6
    min_delta: float = 1.0 / 64
    relaxation: float = 1.0

    def __post_init__(self):
        if not (0 < self.min_delta <= self.delta_init <= 1):
            raise InvalidArgumentError("need 0 < min_delta <= delta_init <= 1")
        if not (0 < self.theta < 1):
            raise InvalidArgumentError("theta must lie in (0, 1)")
        if not (0 < self.relaxation <= 1):
            raise InvalidArgumentError("relaxation must lie in (0, 1]")


@dataclass
class StepRecord:
    alpha: float
    delta: float
    inner_iters: list
    distances: list
    ratios: list

    @property
    def total_inner(self) -> int:
        return int(sum(self.inner_iters))

    @property
    def max_ratio(self) -> float:
        r = [x for x in self.ratios if np.isfinite(x)]
        return max(r) if r else float("nan")


@dataclass
class ConvergenceTrace:
    steps: list = field(default_factory=list)
    rejections: list = field(default_factory=list)  # (alpha0, delta, reason)

    @property
    def alphas(self):
        return [s.alpha for s in self.steps]

    @property
    def final_alpha(self) -> float:
        return self.steps[-1].alpha if self.steps else 0.0

    def rows(self):
        """Rows for the trace CSV: step, alpha, delta, inner_iters, last_distance, ratio."""
        for k, s in enumerate(self.steps):
            yield (k, s.alpha, s.delta, s.total_inner, s.distances[-1] if s.distances else 0.0,
                   s.max_ratio)


# ---------------------------------------------------------------------------
# branch selection


def choose_branch(sys: CoefficientSystem) -> str:
    if sys.m > sys.n:
        return M_GT_N
    if sys.m < sys.n:
        return M_LT_N
    if sys.mu1 > 0 and sys.beta1 > 0:
        return M_GT_N
    if sys.mu2 > 0 and sys.beta2 > 0:
        return M_LT_N
    raise InvalidArgumentError("m = n needs (mu1 > 0, beta1 > 0) or (mu2 > 0, beta2 > 0)")


def _check_branch(sys, branch):
    if branch == M_GT_N and (sys.m < sys.n or (sys.m == sys.n and not (sys.mu1 > 0 and sys.beta1 > 0))):
        if sys.m < sys.n or sys.strict:
            raise InvalidArgumentError("branch mGTn needs m >= n with mu1 > 0 and beta1 > 0")
    if branch == M_LT_N and (sys.m > sys.n or (sys.m == sys.n and not (sys.mu2 > 0 and sys.beta2 > 0))):
        if sys.m > sys.n or sys.strict:
            raise InvalidArgumentError("branch mLTn needs m <= n with mu2 > 0 and beta2 > 0")
    if branch not in (M_GT_N, M_LT_N):
        raise InvalidArgumentError(f"unknown branch {branch!r}")


# ---------------------------------------------------------------------------
# forward doubly stochastic equation via time reversal


def reverse_nodes(a: np.ndarray, axis: int = 2) -> np.ndarray:
    """Map node (or interval) index i -> last - i along ``axis``."""
    return np.flip(a, axis=axis)


@dataclass
class ForwardEquation:
    """dX = a dt + b dW - Y dB + int c dN~,  X_0 = x0   (cell layout).

    a (R, M, N+1, n), b (R, M, N+1, n, d), c (R, M, N+1, n, J), x0 (R, M, n),
    features (R, M, N+1, k): F_t-measurable regressors for the reversed sweep.
    """

    x0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    features: np.ndarray


@dataclass
class GroupedBackwardProblem:
    """Arguments of :func:`backward_sweep` on grouped arrays (groups = W/N paths)."""

    terminal: np.ndarray
    features: np.ndarray
    dW: np.ndarray
    dN: np.ndarray
    rates: np.ndarray
    dB: np.ndarray
    driver_f: object
    driver_g: object
    d: int
    l: int


def reverse_time_problem(eq: ForwardEquation, noise: NoiseEnsemble) -> GroupedBackwardProblem:
    """Recast the forward equation as a backward one in s = T - t.

    In reversed time B is the forward noise (its integrand is Y) while W and the
    compensated jumps become frozen backward noise with integrand -(b, c).
    Groups are the (W, N) paths, samples are the B replicates.
    """
    n = eq.x0.shape[-1]
    d, J, l = noise.d, noise.marks.J, noise.l
    R, M = noise.replicates, noise.paths
    tr = lambda arr: np.swapaxes(arr, 0, 1)  # noqa: E731
    a_rev = reverse_nodes(tr(np.broadcast_to(eq.a, (R, M) + eq.a.shape[2:])))
    bc = np.concatenate([np.broadcast_to(eq.b, (R, M) + eq.b.shape[2:]),
                         np.broadcast_to(eq.c, (R, M) + eq.c.shape[2:])], axis=-1)
    bc_rev = reverse_nodes(tr(bc))
    fwd = reverse_nodes(tr(noise.cell_dB))  # (1, R, N, l)
    bwd = reverse_nodes(np.concatenate([noise.dW, noise.compensated], axis=-1)[:, None])  # (M,1,N,d+J)
    feats = reverse_nodes(tr(np.broadcast_to(eq.features, (R, M) + eq.features.shape[2:])))

    def driver_f(k, P, Q, K):
        return -a_rev[:, :, k]

    def driver_g(k, P, Q, K):
        return -bc_rev[:, :, k]

    return GroupedBackwardProblem(
        terminal=tr(np.broadcast_to(eq.x0, (R, M, n))).copy(), features=feats,
        dW=fwd, dN=np.zeros((1, 1, noise.grid.N, 0)), rates=np.zeros(0), dB=bwd,
        driver_f=driver_f, driver_g=driver_g, d=l, l=d + J)


def solve_forward_equation(eq: ForwardEquation, noise: NoiseEnsemble, cfg: RegressionConfig):
    """Return (X, Y) in cell layout."""
    prob = reverse_time_problem(eq, noise)
    Pt, Qt, _, _ = backward_sweep(prob.terminal, prob.features, prob.dW, prob.dN, prob.rates,
                                  prob.dB, noise.grid.dt, prob.driver_f, prob.driver_g, cfg,
                                  prob.d, prob.l)
    X = np.swapaxes(reverse_nodes(Pt), 0, 1)
    Y = np.swapaxes(reverse_nodes(Qt), 0, 1)
    return np.ascontiguousarray(X), np.ascontiguousarray(Y)


# ---------------------------------------------------------------------------
# one pass of the alpha0-system


@dataclass
class SolverConfig:
    """Regression settings for the two sweeps of a pass.

    With ``state_features`` the sweep for the second equation also regresses on
    the first equation's fresh state (X for mGTn, P for mLTn); otherwise only
    on the driving noise, which keeps each pass affine for linear systems.
    """

    regression: RegressionConfig = field(default_factory=RegressionConfig)
    reverse_regression: RegressionConfig = field(default_factory=lambda: RegressionConfig(degree=1))
    state_features: bool = False


def _field(fn, sys, nodes, U: QuintupleSolution):
    """Evaluate a coefficient at every node: returns (R, M, N+1, ...)."""
    return np.stack([fn(t, *U.node(i)) for i, t in enumerate(nodes)], axis=2)


def _noise_states(noise: NoiseEnsemble):
    R, M = noise.replicates, noise.paths
    W = np.broadcast_to(noise.W_path()[None], (R,) + noise.W_path().shape)
    Nt = noise.Ntilde_path()
    Nt = np.broadcast_to(Nt[None], (R,) + Nt.shape)
    B = noise.B_path()
    Bfut = np.broadcast_to((B[:, -1:] - B)[:, None], (R, M) + B.shape[1:])
    return W, Nt, Bfut


class _Pass:
    """Evaluates one sweep-pair of the alpha0-system given a lag iterate."""

    def __init__(self, sys: CoefficientSystem, branch: str, noise: NoiseEnsemble,
                 sources: SourceTerms, cfg: SolverConfig):
        _check_branch(sys, branch)
        self.sys, self.branch, self.noise, self.cfg = sys, branch, noise, cfg
        self.src = sources.expand(sys, noise)
        self.nodes = noise.grid.nodes
        self.W, self.Nt, self.Bfut = _noise_states(noise)
        self.H = sys.H
        self._bar_cache = (None, None)

    def _bar_terms(self, Ubar, delta):
        key = (id(Ubar), delta)
        if self._bar_cache[0] == key:
            return self._bar_cache[1]
        s, H = self.sys, self.H
        nodes = self.nodes
        out = {}
        if delta == 0.0:
            out = None
        elif self.branch == M_GT_N:
            out["f"] = delta * _field(s.f, s, nodes, Ubar)
            out["g"] = delta * _field(s.g, s, nodes, Ubar)
            out["h"] = delta * _field(s.h, s, nodes, Ubar)
            out["F"] = delta * (_field(s.F, s, nodes, Ubar) + s.mu1 * np.einsum("ij,...j->...i", H, Ubar.X))
            out["G"] = delta * (_field(s.G, s, nodes, Ubar) + s.mu1 * np.einsum("ij,...jl->...il", H, Ubar.Y))
            out["x0"] = delta * s.Psi(Ubar.P[:, :, 0])
            XT = Ubar.X[:, :, -1]
            out["pT"] = delta * (s.Phi(XT) - XT @ H.T)
        else:
            out["f"] = delta * (_field(s.f, s, nodes, Ubar) + s.mu2 * Ubar.P @ H)
            out["g"] = delta * (_field(s.g, s, nodes, Ubar) + s.mu2 * np.einsum("ij,...id->...jd", H, Ubar.Q))
            out["h"] = delta * (_field(s.h, s, nodes, Ubar) + s.mu2 * np.einsum("ij,...iz->...jz", H, Ubar.K))
            out["F"] = delta * _field(s.F, s, nodes, Ubar)
            out["G"] = delta * _field(s.G, s, nodes, Ubar)
            P0 = Ubar.P[:, :, 0]
            out["x0"] = delta * (s.Psi(P0) - P0 @ H)
            out["pT"] = delta * s.Phi(Ubar.X[:, :, -1])
        self._bar_cache = (key, out)
        return out

    def _solve_P(self, F_tot, G_tot, PT, feats):
        noise = self.noise
        P, Q, K, _ = backward_sweep(
            np.ascontiguousarray(PT), feats, noise.cell_dW, noise.cell_dN, noise.marks.lam,
            noise.cell_dB, noise.grid.dt,
            lambda i, *_: F_tot[:, :, i], lambda i, *_: G_tot[:, :, i],
            self.cfg.regression, noise.d, noise.l)
        return P, Q, K

    def _solve_X(self, a, b, c, x0, feats):
        return solve_forward_equation(ForwardEquation(x0, a, b, c, feats), self.noise,
                                      self.cfg.reverse_regression)

    def __call__(self, alpha0: float, delta: float, Ubar: QuintupleSolution,
                 lag: QuintupleSolution) -> QuintupleSolution:
        s, H, nodes, src = self.sys, self.H, self.nodes, self.src
        bar = self._bar_terms(Ubar, delta)
        add = (lambda k: bar[k]) if bar is not None else (lambda k: 0.0)
        own = alpha0 != 0.0
        if self.branch == M_GT_N:
            a = src.f0 + add("f")
            b = src.g0 + add("g")
            c = src.h0 + add("h")
            x0 = src.psi + add("x0")
            if own:
                a = a + alpha0 * _field(s.f, s, nodes, lag)
                b = b + alpha0 * _field(s.g, s, nodes, lag)
                c = c + alpha0 * _field(s.h, s, nodes, lag)
                x0 = x0 + alpha0 * s.Psi(lag.P[:, :, 0])
            X, Y = self._solve_X(a, b, c, x0, self.Bfut)
            mix = QuintupleSolution(X, lag.P, Y, lag.Q, lag.K)
            F_tot = src.F0 + add("F") - (1 - alpha0) * s.mu1 * np.einsum("ij,...j->...i", H, X)
            G_tot = src.G0 + add("G") - (1 - alpha0) * s.mu1 * np.einsum("ij,...jl->...il", H, Y)
            XT = X[:, :, -1]
            PT = src.phi + add("pT") + (1 - alpha0) * XT @ H.T
            if own:
                F_tot = F_tot + alpha0 * _field(s.F, s, nodes, mix)
                G_tot = G_tot + alpha0 * _field(s.G, s, nodes, mix)
                PT = PT + alpha0 * s.Phi(XT)
            feats = np.concatenate(([X] if self.cfg.state_features else []) + [self.W, self.Nt], axis=-1)
            P, Q, K = self._solve_P(F_tot, G_tot, PT, feats)
        else:
            F_tot = src.F0 + add("F")
            G_tot = src.G0 + add("G")
            PT = src.phi + add("pT")
            if own:
                F_tot = F_tot + alpha0 * _field(s.F, s, nodes, lag)
                G_tot = G_tot + alpha0 * _field(s.G, s, nodes, lag)
                PT = PT + alpha0 * s.Phi(lag.X[:, :, -1])
            feats = np.concatenate([self.W, self.Nt], axis=-1)
            P, Q, K = self._solve_P(F_tot, G_tot, PT, feats)
            mix = QuintupleSolution(lag.X, P, lag.Y, Q, K)
            a = src.f0 + add("f") - (1 - alpha0) * s.mu2 * P @ H
            b = src.g0 + add("g") - (1 - alpha0) * s.mu2 * np.einsum("ij,...id->...jd", H, Q)
            c = src.h0 + add("h") - (1 - alpha0) * s.mu2 * np.einsum("ij,...iz->...jz", H, K)
            P0 = P[:, :, 0]
            x0 = src.psi + add("x0") + (1 - alpha0) * P0 @ H
            if own:
                a = a + alpha0 * _field(s.f, s, nodes, mix)
                b = b + alpha0 * _field(s.g, s, nodes, mix)
                c = c + alpha0 * _field(s.h, s, nodes, mix)
                x0 = x0 + alpha0 * s.Psi(P0)
            rfeats = np.concatenate(([P] if self.cfg.state_features else []) + [self.Bfut], axis=-1)
            X, Y = self._solve_X(a, b, c, x0, rfeats)
        return QuintupleSolution(X, P, Y, Q, K, noise=self.noise)


# ---------------------------------------------------------------------------
# public operations


def solve_alpha_zero(branch: str, sys: CoefficientSystem, sources: SourceTerms,
                     noise: NoiseEnsemble, cfg: SolverConfig = SolverConfig()) -> QuintupleSolution:
    """Solve the decoupled alpha = 0 system: one equation first, then the other."""
    zero = QuintupleSolution.zeros(sys, noise)
    return _Pass(sys, branch, noise, sources, cfg)(0.0, 0.0, zero, zero)


def _tail_ok(dist, ratio, tol):
    """Predicted remaining squared error of a geometric iteration is below tol / 4."""
    if dist == 0.0:
        return True
    if dist >= tol:
        return False
    if ratio is None or not np.isfinite(ratio):
        return dist < tol / 4
    k = np.sqrt(min(ratio, 0.99))
    return dist * k * k / (1 - k) ** 2 < tol / 4


class _InnerState:
    def __init__(self, relaxation):
        self.omega = relaxation


def _inner_solve(pass_fn, alpha0, delta, Ubar, start, hcfg: HomotopyConfig, state: _InnerState):
    lag = start
    dists = []
    grow = 0
    for it in range(1, hcfg.max_inner + 1):
        new = pass_fn(alpha0, delta, Ubar, lag)
        dist = solution_distance(new, lag)
        ratio = dist / dists[-1] if dists and dists[-1] > 0 else None
        dists.append(dist)
        if alpha0 == 0.0 or _tail_ok(dist, ratio, hcfg.inner_tol):
            # with alpha0 = 0 a pass does not read the lag iterate
            return new, it, dists
        if not np.isfinite(dist):
            break
        grow = grow + 1 if (ratio is not None and ratio >= 0.9) else 0
        if grow >= 2 and state.omega > 1e-3:
            state.omega *= 0.5
            grow = 0
            log.debug("inner relaxation reduced to %g", state.omega)
        lag = new.blend(lag, state.omega)
    raise MapDivergenceError(f"inner iteration did not converge in {hcfg.max_inner} passes "
                             f"(alpha0={alpha0}, delta={delta})", last_distance=dists[-1])


def continuation_map(branch: str, sys: CoefficientSystem, alpha0: float, delta: float,
                     Ubar: QuintupleSolution, sources: SourceTerms, noise: NoiseEnsemble,
                     hcfg: HomotopyConfig = HomotopyConfig(), cfg: SolverConfig = SolverConfig(),
                     start: Optional[QuintupleSolution] = None, _pass=None, _state=None):
    """U = I_{alpha0 + delta}(Ubar): the alpha0-system with delta-terms frozen at Ubar."""
    if alpha0 + delta > 1 + 1e-12 or delta < 0 or alpha0 < 0:
        raise InvalidArgumentError("need 0 <= alpha0, 0 <= delta, alpha0 + delta <= 1")
    pass_fn = _pass or _Pass(sys, branch, noise, sources, cfg)
    state = _state or _InnerState(hcfg.relaxation)
    U, _, _ = _inner_solve(pass_fn, alpha0, delta, Ubar, start or Ubar, hcfg, state)
    return U


def _advance(pass_fn, alpha0, delta, U, hcfg, state):
    """Banach iteration of I_{alpha0+delta} from U; raises _NoContraction when slow."""
    Ubar = U
    dists, ratios, inner = [], [], []
    for _ in range(hcfg.max_inner):
        new, it, _ = _inner_solve(pass_fn, alpha0, delta, Ubar, Ubar, hcfg, state)
        inner.append(it)
        dist = solution_distance(new, Ubar)
        ratio = dist / dists[-1] if dists and dists[-1] > 0 else float("nan")
        dists.append(dist)
        ratios.append(ratio)
        if np.isfinite(ratio) and ratio >= hcfg.theta and dist >= hcfg.inner_tol:
            raise _NoContraction(ratio)
        if _tail_ok(dist, ratio if np.isfinite(ratio) else None, hcfg.inner_tol):
            return new, StepRecord(alpha0 + delta, delta, inner, dists, ratios)
        Ubar = new
    raise _NoContraction(float("nan"))


class _NoContraction(Exception):
    def __init__(self, ratio):
        super().__init__(f"measured contraction ratio {ratio}")
        self.ratio = ratio


def solve_fbdsdep(sys: CoefficientSystem, noise: NoiseEnsemble,
                  homotopy: HomotopyConfig = HomotopyConfig(), cfg: SolverConfig = SolverConfig(),
                  sources: Optional[SourceTerms] = None, branch: Optional[str] = None):
    """Continuation from alpha = 0 to alpha = 1 with adaptive step halving.

    Returns ``(solution, trace)``.
    """
    branch = branch or choose_branch(sys)
    sources = sources or SourceTerms()
    pass_fn = _Pass(sys, branch, noise, sources, cfg)
    state = _InnerState(homotopy.relaxation)
    zero = QuintupleSolution.zeros(sys, noise)
    U = pass_fn(0.0, 0.0, zero, zero)
    trace = ConvergenceTrace()
    alpha, delta = 0.0, homotopy.delta_init
    while alpha < 1.0 - 1e-12:
        step = min(delta, 1.0 - alpha)
        try:
            U_new, rec = _advance(pass_fn, alpha, step, U, homotopy, state)
        except (_NoContraction, MapDivergenceError) as exc:
            trace.rejections.append((alpha, step, str(exc)))
            delta = step / 2
            if delta < homotopy.min_delta * (1 - 1e-12):
                raise ContinuationFailure(
                    f"step size fell below {homotopy.min_delta} at alpha={alpha}", trace=trace) from exc
            log.info("halving delta to %g at alpha=%g (%s)", delta, alpha, exc)
            continue
        alpha = 1.0 if abs(alpha + step - 1.0) < 1e-12 else alpha + step
        rec.alpha = alpha
        trace.steps.append(rec)
        U = U_new
    return U, trace


def boundary_residuals(sys: CoefficientSystem, U: QuintupleSolution):
    """Mean squares of X_0 - Psi(P_0) and P_T - Phi(X_T) over cells.

    Squared, like :func:`solution_distance`, so both compare directly with
    ``HomotopyConfig.inner_tol``.
    """
    r0 = U.X[:, :, 0] - sys.Psi(U.P[:, :, 0])
    rT = U.P[:, :, -1] - sys.Phi(U.X[:, :, -1])
    return float(np.mean(np.sum(r0**2, -1))), float(np.mean(np.sum(rT**2, -1)))

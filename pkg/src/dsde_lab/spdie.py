"""Markovian systems and their random fields u(t, x) = P_t.

Two evaluators are provided: a Monte Carlo one (forward Euler for X from (t, x),
backward regression for P) and, for scalar problems without dB forcing, an
explicit finite-difference solver of the integro-differential equation

    u_t + f u_x + 1/2 g^2 u_xx + sum_j lambda_j (u(x + h_j) - u - h_j u_x) = F,
    u(T, x) = Phi(x).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bdsdep import RegressionConfig, backward_sweep
from .coeffs import CoefficientSystem
from .errors import (CFLError, DomainTooSmallError, InvalidArgumentError, InvalidSystemError,
                     MapDivergenceError)
from .randomness import NO_MARKS, MarkSpace, make_grid, sample_ensemble

_PROBE_TOL = 1e-12


def markovian_system(f=None, g=None, h=None, F=None, G=None, Phi=None, n: int = 1, m: int = 1,
                     d: int = 1, l: int = 0, marks: MarkSpace = NO_MARKS,
                     name: str = "markovian") -> CoefficientSystem:
    """Build a coefficient system from reduced-argument callables.

    ``f(t, x, p)``, ``g(t, x, p)``, ``h(t, x)`` (all marks, shape (..., n, J)),
    ``F(t, x, p, q, k)``, ``G(t, x, p, q, k)``, ``Phi(x)``. Missing ones are zero
    (``Phi`` defaults to the identity when m == n).
    """
    J = marks.J

    def zero(*tail):
        return lambda t, X, *_: np.zeros(X.shape[:-1] + tail)

    fs = (lambda t, X, P, Y, Q, K: np.broadcast_to(f(t, X, P), X.shape[:-1] + (n,))) if f else zero(n)
    gs = ((lambda t, X, P, Y, Q, K: np.broadcast_to(g(t, X, P), X.shape[:-1] + (n, d)))
          if g else zero(n, d))
    hs = (lambda t, X, P, Y, Q, K: np.broadcast_to(h(t, X), X.shape[:-1] + (n, J))) if h else zero(n, J)
    Fs = ((lambda t, X, P, Y, Q, K: np.broadcast_to(F(t, X, P, Q, K), X.shape[:-1] + (m,)))
          if F else zero(m))
    Gs = ((lambda t, X, P, Y, Q, K: np.broadcast_to(G(t, X, P, Q, K), X.shape[:-1] + (m, l)))
          if G else zero(m, l))
    if Phi is None:
        if m != n:
            raise InvalidArgumentError("Phi is required when m != n")
        Phi = lambda X: X  # noqa: E731
    Phis = lambda X: np.broadcast_to(Phi(X), X.shape[:-1] + (m,))  # noqa: E731
    return CoefficientSystem(n=n, m=m, d=d, l=l, f=fs, g=gs, h=hs, F=Fs, G=Gs,
                             Psi=lambda P: np.zeros(P.shape[:-1] + (n,)), Phi=Phis,
                             H=np.eye(m, n), marks=marks, name=name, strict=False)


@dataclass
class MarkovianSystem:
    """A coefficient system whose forward coefficients ignore (Y, Q, K) and whose
    jump amplitude ignores P; verified by probing at construction."""

    system: CoefficientSystem
    probes: int = 20
    seed: int = 0

    def __post_init__(self):
        s = self.system
        rng = np.random.default_rng(self.seed)
        S = self.probes
        shapes = [(S, s.n), (S, s.m), (S, s.n, s.l), (S, s.m, s.d), (S, s.m, s.J)]
        base = [rng.normal(size=sh) for sh in shapes]
        other = [rng.normal(size=sh) * 3 for sh in shapes]
        for t in (0.0, 0.37):
            X, P, Y, Q, K = base
            _, _, Y2, Q2, K2 = other
            P2 = other[1]
            checks = {
                "f": (s.f(t, X, P, Y, Q, K), s.f(t, X, P, Y2, Q2, K2)),
                "g": (s.g(t, X, P, Y, Q, K), s.g(t, X, P, Y2, Q2, K2)),
                "h": (s.h(t, X, P, Y, Q, K), s.h(t, X, P2, Y2, Q2, K2)),
                "F": (s.F(t, X, P, Y, Q, K), s.F(t, X, P, Y2, Q, K)),
                "G": (s.G(t, X, P, Y, Q, K), s.G(t, X, P, Y2, Q, K)),
            }
            for name, (a, b) in checks.items():
                a, b = np.asarray(a, float), np.asarray(b, float)
                if not np.allclose(a, b, rtol=0, atol=_PROBE_TOL * (1 + np.abs(a).max(initial=0))):
                    raise InvalidSystemError(f"coefficient {name} is not Markovian (depends on "
                                             "arguments outside its allowed set)")

    def __getattr__(self, item):
        return getattr(self.system, item)

    @property
    def has_backward_forcing(self) -> bool:
        s = self.system
        x = np.linspace(-2, 2, 7)[:, None] * np.ones((1, s.n))
        z = s.zeros((7,))
        vals = [s.G(t, x, z.P + 1.0, z.Y, z.Q, z.K) for t in (0.0, 0.5)]
        return s.l > 0 and any(np.any(v != 0) for v in vals)


@dataclass
class FieldEstimate:
    points: list
    values: np.ndarray  # (npts, R, m)
    stderr: np.ndarray  # (npts, R, m)
    paths: int
    replicates: int

    def rows(self):
        """(t, x, u, stderr) rows for scalar problems, one per point and replicate."""
        for (t, x), v, s in zip(self.points, self.values, self.stderr):
            for r in range(self.replicates):
                yield (t, float(np.ravel(x)[0]), float(v[r, 0]), float(s[r, 0]))


def _as_markov(sys) -> MarkovianSystem:
    return sys if isinstance(sys, MarkovianSystem) else MarkovianSystem(sys)


def evaluate_u(sys, t: float, x, T: float, steps: int = 32, paths: int = 20000, seed: int = 0,
               replicates: int = 1, regression: RegressionConfig = RegressionConfig(),
               max_picard: int = 50, tol: float = 1e-10):
    """Monte Carlo estimate of u(t, x) = P_t for X started at x at time t.

    Returns ``(u, stderr)`` with shape (m,) when ``replicates == 1`` and (R, m)
    otherwise (one value of the random field per frozen B path).
    """
    ms = _as_markov(sys)
    s = ms.system
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (s.n,):
        raise InvalidArgumentError(f"x must have {s.n} components")
    if not (0 <= t <= T):
        raise InvalidArgumentError("need 0 <= t <= T")
    R = replicates
    if t == T:
        u = np.broadcast_to(s.Phi(x[None])[0], (R, s.m))
        out = (u.copy(), np.zeros((R, s.m)))
        return (out[0][0], out[1][0]) if R == 1 else out
    grid = make_grid(T - t, steps)
    noise = sample_ensemble(grid, s.d, s.l, s.marks, seed, paths, R)
    dt = grid.dt
    nodes = t + grid.nodes
    dW, dN = noise.cell_dW, noise.cell_dN
    M, N = paths, steps
    P = np.zeros((R, M, N + 1, s.m))
    Q = np.zeros((R, M, N + 1, s.m, s.d))
    K = np.zeros((R, M, N + 1, s.m, s.J))
    X = None
    zY = np.zeros((R, M, s.n, s.l))
    for _ in range(max_picard):
        Xn = np.empty((R, M, N + 1, s.n))
        Xn[:, :, 0] = x
        for i in range(N):
            Xi, Pi = Xn[:, :, i], P[:, :, i]
            args = (Xi, Pi, zY, Q[:, :, i], K[:, :, i])
            Xn[:, :, i + 1] = (Xi + s.f(nodes[i], *args) * dt
                               + np.einsum("rsnd,rsd->rsn", s.g(nodes[i], *args),
                                           np.broadcast_to(dW[:, :, i], (R, M, s.d)))
                               + np.einsum("rsnj,rsj->rsn", s.h(nodes[i], *args),
                                           np.broadcast_to(dN[:, :, i], (R, M, s.J))))
        term = s.Phi(Xn[:, :, -1])

        def drv_f(i, Ph, Qi, Ki, _X=Xn):
            return s.F(nodes[i], _X[:, :, i], Ph, zY, Qi, Ki)

        def drv_g(i, Pn, Qi, Ki, _X=Xn):
            return s.G(nodes[i], _X[:, :, i], Pn, zY, Qi, Ki)

        Pn, Q, K, _ = backward_sweep(term, Xn, dW, dN, s.marks.lam, noise.cell_dB, dt,
                                     drv_f, drv_g, regression, s.d, s.l)
        change = float(np.max(np.abs(Pn - P))) if X is not None else np.inf
        P, X = Pn, Xn
        if change <= tol * (1 + float(np.max(np.abs(P)))):
            break
    else:
        raise MapDivergenceError("forward/backward coupling did not settle", last_distance=change)
    # pathwise aggregate: Phi(X_T) - sum F dt - sum G dB has mean P_t within a replicate
    agg = P[:, :, -1].copy()
    for i in range(N):
        agg -= s.F(nodes[i], X[:, :, i], P[:, :, i], zY, Q[:, :, i], K[:, :, i]) * dt
        if s.l:
            agg -= np.einsum("rsml,rsl->rsm", s.G(nodes[i + 1], X[:, :, i + 1], P[:, :, i + 1], zY,
                                                  Q[:, :, i], K[:, :, i]),
                             np.broadcast_to(noise.cell_dB[:, :, i], (R, M, s.l)))
    u = P[:, :, 0].mean(axis=1)
    se = agg.std(axis=1, ddof=1) / np.sqrt(M)
    return (u[0], se[0]) if R == 1 else (u, se)


def estimate_field(sys, points, T: float, **kw) -> FieldEstimate:
    vals, ses = [], []
    R = kw.get("replicates", 1)
    for t, x in points:
        u, se = evaluate_u(sys, t, x, T, **kw)
        vals.append(np.reshape(u, (R, -1)))
        ses.append(np.reshape(se, (R, -1)))
    return FieldEstimate(list(points), np.array(vals), np.array(ses), kw.get("paths", 20000), R)


# ---------------------------------------------------------------------------
# finite differences


@dataclass
class FDField:
    t: np.ndarray  # (nt+1,)
    x: np.ndarray  # (nx,) requested domain nodes
    u: np.ndarray  # (nt+1, nx)

    def __call__(self, t: float, x: float) -> float:
        """Bilinear interpolation in (t, x)."""
        k = np.clip(np.searchsorted(self.t, t) - 1, 0, len(self.t) - 2)
        w = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        a = np.interp(x, self.x, self.u[k])
        b = np.interp(x, self.x, self.u[k + 1])
        return float((1 - w) * a + w * b)


def _scalar_coeffs(s: CoefficientSystem, t, x, u, ux, shift):
    X = x[:, None]
    P = u[:, None]
    zY = np.zeros((x.size, 1, s.l))
    g = s.g(t, X, P, zY, np.zeros((x.size, 1, s.d)), np.zeros((x.size, 1, s.J)))[:, 0, :]
    Q = (g * ux[:, None])[:, None, :]
    K = shift[:, None, :]
    f = s.f(t, X, P, zY, Q, K)[:, 0]
    h = s.h(t, X, P, zY, Q, K)[:, 0, :]
    F = s.F(t, X, P, zY, Q, K)[:, 0]
    return f, g, h, F


def cfl_bound(s: CoefficientSystem, T: float, xs: np.ndarray) -> float:
    """Largest stable time step of the explicit scheme, from coefficients sampled at t = T."""
    n = xs.size
    dx = xs[1] - xs[0]
    z = np.zeros(n)
    worst = 0.0
    for t in (0.0, T):
        f, g, h, _ = _scalar_coeffs(s, t, xs, z, z, np.zeros((n, s.J)))
        comp = f - h @ s.marks.lam if s.J else f
        rate = np.sum(g**2, axis=-1) / dx**2 + np.abs(comp) / dx + s.marks.total_mass
        worst = max(worst, float(rate.max()))
    return np.inf if worst == 0 else 1.0 / worst


def _shifted(u, xs, pts):
    """Linear interpolation inside the grid, quadratic extrapolation outside."""
    out = np.interp(pts, xs, u)
    dx = xs[1] - xs[0]
    for mask, x0, (a, b, c) in ((pts < xs[0], xs[0], u[:3]), (pts > xs[-1], xs[-1], u[-1:-4:-1])):
        if np.any(mask):
            s = -np.abs(pts[mask] - x0) / dx
            out[mask] = a + s * (-1.5 * a + 2 * b - 0.5 * c) + 0.5 * s * s * (a - 2 * b + c)
    return out


def solve_pide_fd(sys, T: float, domain=(-4.0, 4.0), nx: int = 401, nt: Optional[int] = None,
                  safety: float = 0.9) -> FDField:
    """Explicit backward-in-time scheme for the scalar equation without dB forcing."""
    ms = _as_markov(sys)
    s = ms.system
    if s.n != 1 or s.m != 1:
        raise InvalidArgumentError("finite differences are limited to n = m = 1")
    if ms.has_backward_forcing:
        raise InvalidArgumentError("finite differences need G = 0")
    a, b = map(float, domain)
    if not (b > a and nx >= 5):
        raise InvalidArgumentError("need a < b and at least 5 nodes")
    dx = (b - a) / (nx - 1)
    xs0 = np.linspace(a, b, nx)
    # pad by the largest jump amplitude seen on the grid
    hmax = 0.0
    if s.J:
        z = np.zeros(nx)
        for t in (0.0, T):
            _, _, h, _ = _scalar_coeffs(s, t, xs0, z, z, np.zeros((nx, s.J)))
            hmax = max(hmax, float(np.abs(h).max()))
    pad = int(np.ceil(hmax / dx)) + 1 if hmax > 0 else 0
    xs = a + dx * np.arange(-pad, nx + pad)
    dt_max = cfl_bound(s, T, xs)
    if nt is None:
        nt = max(1, int(np.ceil(T / (safety * dt_max))))
    dt = T / nt
    if dt > dt_max:
        raise CFLError(f"time step {dt:.3g} exceeds the stability bound {dt_max:.3g}", max_dt=dt_max)
    u = np.asarray(s.Phi(xs[:, None]), dtype=float)[:, 0]
    out = np.empty((nt + 1, nx))
    out[nt] = u[pad:pad + nx]
    ts = np.linspace(0.0, T, nt + 1)
    lam = s.marks.lam
    lo, hi = xs[0] - 1e-12, xs[-1] + 1e-12
    for k in range(nt, 0, -1):
        t = ts[k]
        # quadratic extrapolation ghosts
        ug = np.concatenate([[3 * u[0] - 3 * u[1] + u[2]], u, [3 * u[-1] - 3 * u[-2] + u[-3]]])
        uxx = (ug[2:] - 2 * u + ug[:-2]) / dx**2
        fwd = (ug[2:] - u) / dx
        bwd = (u - ug[:-2]) / dx
        ux = 0.5 * (fwd + bwd)
        shift = np.zeros((xs.size, s.J))
        if s.J:
            _, _, h, _ = _scalar_coeffs(s, t, xs, u, ux, shift)
            pts = xs[:, None] + h
            inner = pts[pad:pad + nx]
            if np.any((inner < lo) | (inner > hi)):
                raise DomainTooSmallError("shifted jump argument leaves the padded domain")
            shift = _shifted(u, xs, pts) - u[:, None]
        f, g, h, F = _scalar_coeffs(s, t, xs, u, ux, shift)
        c = f - h @ lam if s.J else f
        upw = np.where(c > 0, fwd, bwd)
        Lu = 0.5 * np.sum(g**2, axis=-1) * uxx + c * upw
        if s.J:
            Lu = Lu + shift @ lam
        u = u + dt * (Lu - F)
        if not np.all(np.isfinite(u)):
            raise CFLError("finite-difference solution blew up", max_dt=dt_max)
        out[k - 1] = u[pad:pad + nx]
    return FDField(ts, xs0, out)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonRow:
    t: float
    x: float
    mc: float
    stderr: float
    fd: float
    fd_error: float
    diff: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.diff < self.tolerance


@dataclass
class ErrorTable:
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def max_excess(self) -> float:
        return max((r.diff / r.tolerance if r.tolerance > 0 else np.inf * (r.diff > 0))
                   for r in self.rows)


def compare_feynman_kac(sys, points, T: float, mc: Optional[dict] = None,
                        domain=(-4.0, 4.0), nx: int = 401) -> ErrorTable:
    """|MC - FD| per point against 3 * stderr + the Richardson error estimate.

    The FD reference is the extrapolated value 2 u_h - u_2h from ``nx`` nodes and
    half as many intervals.
    """
    ms = _as_markov(sys)
    mc = dict(mc or {})
    fine = solve_pide_fd(ms, T, domain, nx)
    coarse = solve_pide_fd(ms, T, domain, (nx - 1) // 2 + 1)
    table = ErrorTable()
    for t, x in points:
        u, se = evaluate_u(ms, t, x, T, **mc)
        xf = float(np.ravel(x)[0])
        uf, uc = fine(t, xf), coarse(t, xf)
        ref = 2 * uf - uc
        est = abs(uf - uc)
        diff = abs(float(u[0]) - ref)
        table.rows.append(ComparisonRow(t, xf, float(u[0]), float(se[0]), ref, est, diff,
                                        3 * float(se[0]) + est))
    return table

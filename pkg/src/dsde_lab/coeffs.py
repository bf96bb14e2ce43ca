"""Coefficient bundles for coupled forward-backward doubly stochastic systems and
sampling-based checks of their structural (monotonicity, Lipschitz) conditions.

All coefficient callables are vectorized over leading axes::

    f(t, X, P, Y, Q, K) -> (..., n)        g(...) -> (..., n, d)
    h(t, X, P, Y, Q, K) -> (..., n, J)     (mark j evaluated with K[..., :, j])
    F(t, X, P, Y, Q, K) -> (..., m)        G(...) -> (..., m, l)
    Psi(P) -> (..., n)                     Phi(X) -> (..., m)

with X (..., n), P (..., m), Y (..., n, l), Q (..., m, d), K (..., m, J).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import InvalidSystemError, ShapeMismatchError
from .randomness import MarkSpace, NO_MARKS


class State(NamedTuple):
    X: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    Q: np.ndarray
    K: np.ndarray

    def __sub__(self, other):
        return State(*(a - b for a, b in zip(self, other)))

    def scale(self, c):
        return State(*(c * a for a in self))


@dataclass
class CoefficientSystem:
    n: int
    m: int
    d: int
    l: int
    f: Callable
    g: Callable
    h: Callable
    F: Callable
    G: Callable
    Psi: Callable
    Phi: Callable
    H: np.ndarray
    marks: MarkSpace = NO_MARKS
    mu1: float = 0.0
    mu2: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    c: float = 1.0
    gamma: float = 0.5
    deterministic: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)
    strict: bool = True

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if self.strict:
            self.validate()

    @property
    def J(self) -> int:
        return self.marks.J

    def validate(self) -> None:
        if self.H.shape != (self.m, self.n):
            raise InvalidSystemError(f"H must be {self.m}x{self.n}, got {self.H.shape}")
        if np.linalg.matrix_rank(self.H) != min(self.m, self.n):
            raise InvalidSystemError("H must have full rank")
        consts = dict(mu1=self.mu1, mu2=self.mu2, beta1=self.beta1, beta2=self.beta2, c=self.c)
        for k, v in consts.items():
            if not (np.isfinite(v) and v >= 0):
                raise InvalidSystemError(f"{k} must be a nonnegative real, got {v}")
        if not (0 <= self.gamma < 1):
            raise InvalidSystemError(f"gamma must lie in [0, 1), got {self.gamma}")
        mu1, mu2, b1, b2 = self.mu1, self.mu2, self.beta1, self.beta2
        if not (mu1 + mu2 > 0 and b1 + b2 > 0 and mu1 + b2 > 0 and mu2 + b1 > 0):
            raise InvalidSystemError("structural constants violate the positivity combinations")
        if self.m > self.n and not (mu1 > 0 and b1 > 0):
            raise InvalidSystemError("m > n requires mu1 > 0 and beta1 > 0")
        if self.n > self.m and not (mu2 > 0 and b2 > 0):
            raise InvalidSystemError("n > m requires mu2 > 0 and beta2 > 0")

    def A(self, t, U: State):
        """The aggregate (H^T F, H f, H^T G, H g, H h) at U."""
        H = self.H
        return (np.einsum("ij,...i->...j", H, self.F(t, *U)),
                np.einsum("ij,...j->...i", H, self.f(t, *U)),
                np.einsum("ij,...il->...jl", H, self.G(t, *U)),
                np.einsum("ij,...jd->...id", H, self.g(t, *U)),
                np.einsum("ij,...jz->...iz", H, self.h(t, *U)))

    def negated(self) -> "CoefficientSystem":
        """Every coefficient multiplied by -1."""
        neg = lambda fn: (lambda *a: -fn(*a))  # noqa: E731
        return replace(self, f=neg(self.f), g=neg(self.g), h=neg(self.h), F=neg(self.F),
                       G=neg(self.G), Psi=neg(self.Psi), Phi=neg(self.Phi),
                       name=f"-{self.name}")

    def zeros(self, shape=()) -> State:
        s = tuple(shape)
        return State(np.zeros(s + (self.n,)), np.zeros(s + (self.m,)),
                     np.zeros(s + (self.n, self.l)), np.zeros(s + (self.m, self.d)),
                     np.zeros(s + (self.m, self.J)))

    def check_state(self, U: State) -> None:
        want = [(self.n,), (self.m,), (self.n, self.l), (self.m, self.d), (self.m, self.J)]
        for name, a, w in zip(State._fields, U, want):
            if np.shape(a)[np.ndim(a) - len(w):] != w:
                raise ShapeMismatchError(f"component {name} has shape {np.shape(a)}, expected (..., {w})")


def pairing(sys: CoefficientSystem, t: float, U: State, Ubar: State) -> np.ndarray:
    """<A(t,U) - A(t,Ubar), U - Ubar>, with the jump part weighted by the mark rates."""
    sys.check_state(U)
    sys.check_state(Ubar)
    dU = U - Ubar
    a, ab = sys.A(t, U), sys.A(t, Ubar)
    dFx, dfp, dGy, dgq, dhk = (x - y for x, y in zip(a, ab))
    return (np.einsum("...i,...i->...", dU.X, dFx)
            + np.einsum("...i,...i->...", dU.P, dfp)
            + np.einsum("...il,...il->...", dU.Y, dGy)
            + np.einsum("...id,...id->...", dU.Q, dgq)
            + sys.marks.inner(dU.K, dhk))


# ---------------------------------------------------------------------------
# empirical checks


@dataclass
class MarginReport:
    samples_tested: int
    min_margin: float
    worst_case: Optional[dict]
    violation_count: int

    @property
    def ok(self) -> bool:
        return self.violation_count == 0


@dataclass
class SamplerConfig:
    seed: int = 0
    radii: tuple = (0.1, 1.0, 10.0)
    horizon: float = 1.0


def _rand_state(sys, rng, size, radius):
    r = radius[:, None]
    return State(rng.standard_normal((size, sys.n)) * r,
                 rng.standard_normal((size, sys.m)) * r,
                 rng.standard_normal((size, sys.n, sys.l)) * r[..., None],
                 rng.standard_normal((size, sys.m, sys.d)) * r[..., None],
                 rng.standard_normal((size, sys.m, sys.J)) * r[..., None])


def sample_pairs(sys: CoefficientSystem, n_samples: int, cfg: SamplerConfig):
    """Independent (t, U, Ubar) batches; entries N(0,1) scaled by a cycling radius."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    radius = np.asarray(cfg.radii, dtype=float)[np.arange(n_samples) % len(cfg.radii)]
    t = rng.uniform(0.0, cfg.horizon, size=n_samples)
    return t, _rand_state(sys, rng, n_samples, radius), _rand_state(sys, rng, n_samples, radius)


def _snap(margin, scale):
    margin = np.asarray(margin, dtype=float)
    return np.where(np.abs(margin) <= 1e-12 * (1.0 + scale), 0.0, margin)


def _report(margin, scale, t, U, Ubar) -> MarginReport:
    margin = _snap(margin, scale)
    k = int(np.argmin(margin))
    worst = {"t": float(t[k])}
    for name, a, b in zip(State._fields, U, Ubar):
        worst[name] = a[k].tolist()
        worst[name + "bar"] = b[k].tolist()
    return MarginReport(len(margin), float(margin[k]), worst, int(np.sum(margin < 0)))


def _per_sample(fn, t, *args):
    # coefficients receive scalar t; group equal t not worth it, loop over samples
    return np.stack([fn(float(ti), *(a[i] for a in args)) for i, ti in enumerate(t)])


def _eval_all(sys, t, U):
    return {name: _per_sample(getattr(sys, name), t, *U) for name in ("f", "g", "h", "F", "G")}


def _sq(a):
    return np.sum(np.square(a).reshape(a.shape[0], int(np.prod(a.shape[1:]))), axis=1)


def check_monotonicity(sys: CoefficientSystem, n_samples: int = 300,
                       primed: bool = False, sampler: Optional[SamplerConfig] = None) -> MarginReport:
    """Sampled margin of the pairing condition; nonnegative everywhere means consistent."""
    sampler = sampler or SamplerConfig()
    t, U, Ub = sample_pairs(sys, n_samples, sampler)
    pair = np.array([pairing(sys, float(ti), State(*(a[i] for a in U)), State(*(b[i] for b in Ub)))
                     for i, ti in enumerate(t)])
    dU = U - Ub
    H = sys.H
    HX = np.einsum("ij,sj->si", H, dU.X)
    HY = np.einsum("ij,sjl->sil", H, dU.Y)
    HtP = np.einsum("ij,si->sj", H, dU.P)
    HtQ = np.einsum("ij,sid->sjd", H, dU.Q)
    HtK = np.einsum("ij,siz->sjz", H, dU.K)
    pen = (sys.mu1 * (_sq(HX) + _sq(HY))
           + sys.mu2 * (_sq(HtP) + _sq(HtQ) + sys.marks.norm_sq(HtK)))
    margin = (pair - pen) if primed else (-pair - pen)
    return _report(margin, np.abs(pair) + pen, t, U, Ub)


def check_boundary_monotonicity(sys: CoefficientSystem, n_samples: int = 300, primed: bool = False,
                                sampler: Optional[SamplerConfig] = None):
    """Margins for the initial (Psi) and terminal (Phi) monotonicity; returns (psi, phi) reports."""
    sampler = sampler or SamplerConfig()
    t, U, Ub = sample_pairs(sys, n_samples, sampler)
    H = sys.H
    dP, dX = U.P - Ub.P, U.X - Ub.X
    HtP = dP @ H
    HX = dX @ H.T
    psi_pair = np.einsum("si,si->s", sys.Psi(U.P) - sys.Psi(Ub.P), HtP)
    phi_pair = np.einsum("si,si->s", sys.Phi(U.X) - sys.Phi(Ub.X), HX)
    psi_pen = sys.beta2 * _sq(HtP)
    phi_pen = sys.beta1 * _sq(HX)
    if primed:
        psi_m, phi_m = psi_pair - psi_pen, -phi_pair - phi_pen
    else:
        psi_m, phi_m = -psi_pair - psi_pen, phi_pair - phi_pen
    return (_report(psi_m, np.abs(psi_pair) + psi_pen, t, U, Ub),
            _report(phi_m, np.abs(phi_pair) + phi_pen, t, U, Ub))


def check_lipschitz(sys: CoefficientSystem, n_samples: int = 300,
                    sampler: Optional[SamplerConfig] = None) -> dict:
    """Sampled margins of the seven Lipschitz bounds, keyed by coefficient name."""
    sampler = sampler or SamplerConfig()
    t, U, Ub = sample_pairs(sys, n_samples, sampler)
    dU = U - Ub
    c, gam = sys.c, sys.gamma
    a, b = _eval_all(sys, t, U), _eval_all(sys, t, Ub)
    x2, p2, y2, q2 = _sq(dU.X), _sq(dU.P), _sq(dU.Y), _sq(dU.Q)
    k2 = sys.marks.norm_sq(dU.K)
    full = x2 + p2 + y2 + q2 + k2
    out = {}
    bounds = {
        "f": c * full,
        "F": c * full,
        "g": c * (x2 + p2 + q2 + k2) + gam * y2,
        "G": c * (x2 + p2 + y2) + gam * (q2 + k2),
    }
    for name, rhs in bounds.items():
        lhs = _sq(a[name] - b[name])
        out[name] = _report(rhs - lhs, rhs + lhs, t, U, Ub)
    if sys.J:
        # pointwise in the mark: the worst mark per sample
        lhs = np.max(np.sum(np.square(a["h"] - b["h"]), axis=1), axis=1)
    else:
        lhs = np.zeros(n_samples)
    out["h"] = _report(c * full - lhs, c * full + lhs, t, U, Ub)
    dpsi = np.sqrt(_sq(sys.Psi(U.P) - sys.Psi(Ub.P)))
    dphi = np.sqrt(_sq(sys.Phi(U.X) - sys.Phi(Ub.X)))
    out["Psi"] = _report(c * np.sqrt(p2) - dpsi, c * np.sqrt(p2) + dpsi, t, U, Ub)
    out["Phi"] = _report(c * np.sqrt(x2) - dphi, c * np.sqrt(x2) + dphi, t, U, Ub)
    return out


# ---------------------------------------------------------------------------
# linear systems


def linear_system(n: int = 1, d: int = 1, l: int = 1, marks: MarkSpace = NO_MARKS,
                  coef: Optional[dict] = None, H_scale: float = 1.0, **constants) -> CoefficientSystem:
    """Square (m = n) system whose coefficients are scalar multiples of same-shaped
    components plus constants.

    ``coef`` keys (all default 0): ``f_X f_P f_c``, ``g_Q g_c``, ``h_K h_c``,
    ``F_X F_P F_c``, ``G_Y G_P G_X G_c`` (``G_X``/``G_P`` need ``l == 1``),
    ``Psi_P Psi_c``, ``Phi_X Phi_c``. ``g_Y`` is accepted when ``d == l``.
    """
    k = {key: 0.0 for key in ("f_X", "f_P", "f_c", "g_Q", "g_Y", "g_c", "h_K", "h_c",
                             "F_X", "F_P", "F_c", "G_Y", "G_X", "G_P", "G_c",
                             "Psi_P", "Psi_c", "Phi_X", "Phi_c")}
    unknown = set(coef or {}) - set(k)
    if unknown:
        raise InvalidSystemError(f"unknown linear coefficients: {sorted(unknown)}")
    k.update(coef or {})
    if k["g_Y"] and d != l:
        raise InvalidSystemError("g_Y requires d == l")
    if (k["G_X"] or k["G_P"]) and l != 1:
        raise InvalidSystemError("G_X / G_P require l == 1")
    J = marks.J

    def f(t, X, P, Y, Q, K):
        return k["f_X"] * X + k["f_P"] * P + k["f_c"]

    def g(t, X, P, Y, Q, K):
        out = k["g_Q"] * Q + k["g_c"] + 0.0 * X[..., None]
        return out + k["g_Y"] * Y if k["g_Y"] else out

    def h(t, X, P, Y, Q, K):
        return k["h_K"] * K + k["h_c"] + 0.0 * X[..., None]

    def F(t, X, P, Y, Q, K):
        return k["F_X"] * X + k["F_P"] * P + k["F_c"]

    def G(t, X, P, Y, Q, K):
        out = k["G_Y"] * Y + k["G_c"]
        if k["G_X"] or k["G_P"]:
            out = out + (k["G_X"] * X + k["G_P"] * P)[..., None]
        return out + 0.0 * X[..., None]

    def Psi(P):
        return k["Psi_P"] * P + k["Psi_c"]

    def Phi(X):
        return k["Phi_X"] * X + k["Phi_c"]

    return CoefficientSystem(n=n, m=n, d=d, l=l, f=f, g=g, h=h, F=F, G=G, Psi=Psi, Phi=Phi,
                             H=H_scale * np.eye(n), marks=marks, name="linear",
                             params=dict(coef=dict(k), n=n, d=d, l=l), **constants)


def zero_system(n: int = 1, d: int = 0, l: int = 0, marks: MarkSpace = NO_MARKS) -> CoefficientSystem:
    return linear_system(n, d, l, marks, {}, mu1=1.0, beta1=1.0)

"""Discrete stochastic integrals, the exact discrete energy identity, and the
integro-differential generator.

Conventions: forward integrals (dt, dW, compensated jumps) take the integrand at
the left node of each interval, backward integrals (dB) at the right node.
Integrands are node arrays shaped ``(..., N+1, k)``; increments ``(..., N, k)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ShapeMismatchError, UnsupportedFunctionError
from .randomness import MarkSpace, NoiseBundle


def _as_path(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[..., None] if a.ndim == 1 else a


def _check(integrand: np.ndarray, inc: np.ndarray):
    if integrand.shape[-2] != inc.shape[-2] + 1 or integrand.shape[-1] != inc.shape[-1]:
        raise ShapeMismatchError(
            f"integrand {integrand.shape} does not conform to increments {inc.shape}")


def forward_ito(integrand, dW) -> np.ndarray:
    """Left-point sum ``sum_i u(t_i) . dW_i``."""
    u, dW = _as_path(integrand), _as_path(dW)
    _check(u, dW)
    return np.einsum("...ik,...ik->...", u[..., :-1, :], dW)


def backward_ito(integrand, dB) -> np.ndarray:
    """Right-point sum ``sum_i v(t_{i+1}) . dB_i``."""
    v, dB = _as_path(integrand), _as_path(dB)
    _check(v, dB)
    return np.einsum("...ik,...ik->...", v[..., 1:, :], dB)


def jump_integral(k_path, bundle: NoiseBundle) -> np.ndarray:
    """Compensated left-point sum ``sum_i sum_j k(t_i, z_j) (counts_ij - lambda_j dt)``."""
    k = _as_path(k_path)
    if k.shape[-1] != bundle.marks.J:
        raise ShapeMismatchError(f"integrand has {k.shape[-1]} marks, noise has {bundle.marks.J}")
    return forward_ito(k, bundle.compensated)


@dataclass
class SemimartingaleDecomposition:
    """alpha_t = alpha0 + int beta dt + int gamma dB + int delta dW + int K dN~.

    Shapes: alpha0 (m,), beta (N+1, m), gamma (N+1, m, l), delta (N+1, m, d),
    K (N+1, m, J).
    """

    alpha0: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    K: np.ndarray

    def _increments(self, bundle: NoiseBundle):
        dt = bundle.grid.dt
        fwd = (self.beta[:-1] * dt
               + np.einsum("imd,id->im", self.delta[:-1], bundle.dW)
               + np.einsum("imj,ij->im", self.K[:-1], bundle.compensated))
        bwd = np.einsum("iml,il->im", self.gamma[1:], bundle.dB)
        return fwd, bwd

    def check(self, bundle: NoiseBundle):
        N = bundle.grid.N
        m = np.asarray(self.alpha0).shape[0]
        expect = {"beta": (N + 1, m), "gamma": (N + 1, m, bundle.dB.shape[1]),
                  "delta": (N + 1, m, bundle.dW.shape[1]), "K": (N + 1, m, bundle.marks.J)}
        for name, shape in expect.items():
            if np.shape(getattr(self, name)) != shape:
                raise ShapeMismatchError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")


def accumulate(dec: SemimartingaleDecomposition, bundle: NoiseBundle) -> np.ndarray:
    """Build the node path of alpha from its decomposition, shape (N+1, m)."""
    dec.check(bundle)
    fwd, bwd = dec._increments(bundle)
    path = np.empty((bundle.grid.N + 1, len(dec.alpha0)))
    path[0] = dec.alpha0
    path[1:] = dec.alpha0 + np.cumsum(fwd + bwd, axis=0)
    return path


def energy_identity_residual(dec: SemimartingaleDecomposition, bundle: NoiseBundle,
                             path: Optional[np.ndarray] = None) -> float:
    """|alpha_T|^2 minus the discrete right-hand side of the energy identity.

    Per interval, with forward increment a and backward increment b,
    |alpha_{i+1}|^2 - |alpha_i|^2 = 2<alpha_i, a> + |a|^2 + 2<alpha_{i+1}, b> - |b|^2,
    so the backward quadratic variation enters with a minus sign.
    """
    if path is None:
        path = accumulate(dec, bundle)
    fwd, bwd = dec._increments(bundle)
    rhs = (np.dot(dec.alpha0, dec.alpha0)
           + 2.0 * np.einsum("im,im->", path[:-1], fwd)
           + np.einsum("im,im->", fwd, fwd)
           + 2.0 * np.einsum("im,im->", path[1:], bwd)
           - np.einsum("im,im->", bwd, bwd))
    return float(np.dot(path[-1], path[-1]) - rhs)


# ---------------------------------------------------------------------------
# generator


@dataclass
class SmoothFunction:
    """u(t, x) -> R^m with optional analytic derivatives.

    ``dt(t, x) -> (m,)``, ``grad(t, x) -> (m, n)``, ``hess(t, x) -> (m, n, n)``.
    Missing derivatives fall back to central differences.
    """

    value: Callable
    dt: Optional[Callable] = None
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None

    def __call__(self, t, x):
        return np.atleast_1d(np.asarray(self.value(t, x), dtype=float))


def _fd_step(x) -> float:
    return 1e-5 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)


def _derivatives(u, t, x, need_fd: bool):
    f = u if isinstance(u, SmoothFunction) else SmoothFunction(u)
    n = x.size
    h = _fd_step(x)
    if f.dt is not None:
        ut = np.atleast_1d(np.asarray(f.dt(t, x), dtype=float))
    elif need_fd:
        ut = (f(t + h, x) - f(t - h, x)) / (2 * h)
    else:
        raise UnsupportedFunctionError("time derivative not supplied")
    if f.grad is not None:
        g = np.asarray(f.grad(t, x), dtype=float).reshape(-1, n)
    elif need_fd:
        eye = np.eye(n) * h
        g = np.stack([(f(t, x + e) - f(t, x - e)) / (2 * h) for e in eye], axis=-1)
    else:
        raise UnsupportedFunctionError("gradient not supplied")
    if f.hess is not None:
        H = np.asarray(f.hess(t, x), dtype=float).reshape(-1, n, n)
    elif need_fd:
        eye = np.eye(n) * h
        f0 = f(t, x)
        H = np.empty((f0.size, n, n))
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    val = (f(t, x + eye[i]) - 2 * f0 + f(t, x - eye[i])) / h**2
                else:
                    val = (f(t, x + eye[i] + eye[j]) - f(t, x + eye[i] - eye[j])
                           - f(t, x - eye[i] + eye[j]) + f(t, x - eye[i] - eye[j])) / (4 * h**2)
                H[:, i, j] = H[:, j, i] = val
    else:
        raise UnsupportedFunctionError("Hessian not supplied")
    return f, ut, g, H


def apply_generator(u, t: float, x, drift, diffusion, jump_map: Optional[Callable],
                    marks: MarkSpace, finite_differences: bool = True) -> np.ndarray:
    """Evaluate ``Lu(t, x)``.

    Lu = u_t + grad u . drift + 1/2 tr(diffusion diffusion^T Hess u)
         + sum_j lambda_j (u(t, x + h_j) - u(t, x) - grad u . h_j)
    with ``h_j = jump_map(t, x, z_j)``.
    """
    if not callable(u):
        raise UnsupportedFunctionError("u must be callable")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    sig = np.asarray(diffusion, dtype=float).reshape(n, -1)
    f, ut, g, H = _derivatives(u, t, x, finite_differences)
    out = ut + g @ drift + 0.5 * np.einsum("kij,ij->k", H, sig @ sig.T)
    if marks.J and jump_map is not None:
        u0 = f(t, x)
        for z, lam in zip(marks.marks, marks.rates):
            hj = np.atleast_1d(np.asarray(jump_map(t, x, z), dtype=float))
            out = out + lam * (f(t, x + hj) - u0 - g @ hj)
    return out

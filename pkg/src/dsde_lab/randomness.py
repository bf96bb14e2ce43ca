"""Reproducible discretized driving noise: W, B and a marked Poisson measure.

Every stream is derived from one master seed through ``numpy.random.SeedSequence``
spawn keys, so outputs depend only on (grid, dims, marks, seed, sizes) and never
on how many worker threads produced them.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ShapeMismatchError

# spawn-key namespaces for the independent noise families
_STREAM_W = 0
_STREAM_N = 1
_STREAM_B = 2
_STREAM_SINGLE = 3

CHUNK = 1024


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def node(self, i: int) -> float:
        return i * self.T / self.N


def make_grid(T: float, N: int) -> TimeGrid:
    """Uniform grid with ``N + 1`` nodes on ``[0, T]``."""
    if not (np.isfinite(T) and T > 0):
        raise InvalidArgumentError(f"horizon T must be positive, got {T!r}")
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"step count N must be a positive integer, got {N!r}")
    return TimeGrid(float(T), int(N))


@dataclass(frozen=True)
class MarkSpace:
    """Finite mark set ``z_1..z_J`` with Poisson rates ``lambda_j``."""

    marks: tuple = ()
    rates: tuple = ()

    def __post_init__(self):
        if len(self.marks) != len(self.rates):
            raise InvalidArgumentError("marks and rates must have equal length")
        if len(set(self.marks)) != len(self.marks):
            raise InvalidArgumentError("mark labels must be distinct")
        for r in self.rates:
            if not (np.isfinite(r) and r > 0):
                raise InvalidArgumentError(f"mark rates must be finite and positive, got {r!r}")
        object.__setattr__(self, "marks", tuple(self.marks))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    @classmethod
    def single(cls, rate: float, label="z1") -> "MarkSpace":
        return cls((label,), (rate,))

    @property
    def J(self) -> int:
        return len(self.marks)

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)

    @property
    def total_mass(self) -> float:
        return float(sum(self.rates))

    def norm_sq(self, k: np.ndarray) -> np.ndarray:
        """Squared L2(lambda) norm of ``k`` shaped (..., m, J): sum_j lambda_j |k(z_j)|^2."""
        k = np.asarray(k, dtype=float)
        return np.einsum("...ij,j->...", np.square(k), self.lam)

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Weighted pairing sum_j lambda_j <a(z_j), b(z_j)> for arrays shaped (..., m, J)."""
        return np.einsum("...ij,...ij,j->...", a, b, self.lam)


NO_MARKS = MarkSpace()


@dataclass(frozen=True)
class NoiseBundle:
    """Increments of one sample path."""

    grid: TimeGrid
    marks: MarkSpace
    dW: np.ndarray  # (N, d)
    dB: np.ndarray  # (N, l)
    counts: np.ndarray  # (N, J)
    seed: int

    @property
    def compensated(self) -> np.ndarray:
        return self.counts - self.marks.lam * self.grid.dt


@dataclass(frozen=True)
class NoiseEnsemble:
    """Product ensemble: ``paths`` (W, N) samples crossed with ``replicates`` B samples.

    Cell ``(r, p)`` is driven by ``dW[p]``, ``counts[p]`` and ``dB[r]``. With
    ``replicates == 1`` the backward motion is frozen for the whole ensemble.
    """

    grid: TimeGrid
    marks: MarkSpace
    dW: np.ndarray  # (M, N, d)
    counts: np.ndarray  # (M, N, J)
    dB: np.ndarray  # (R, N, l)
    seed: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def paths(self) -> int:
        return self.dW.shape[0]

    @property
    def replicates(self) -> int:
        return self.dB.shape[0]

    @property
    def d(self) -> int:
        return self.dW.shape[2]

    @property
    def l(self) -> int:
        return self.dB.shape[2]

    @property
    def compensated(self) -> np.ndarray:
        return self.counts - self.marks.lam * self.grid.dt

    # broadcast views shaped (R, M, N, .)
    @property
    def cell_dW(self) -> np.ndarray:
        return self.dW[None]

    @property
    def cell_dN(self) -> np.ndarray:
        return self.compensated[None]

    @property
    def cell_dB(self) -> np.ndarray:
        return self.dB[:, None]

    def W_path(self) -> np.ndarray:
        """Cumulative W on the nodes, shape (M, N+1, d)."""
        return _cumulate(self.dW)

    def B_path(self) -> np.ndarray:
        return _cumulate(self.dB)

    def Ntilde_path(self) -> np.ndarray:
        return _cumulate(self.compensated)

    def bundle(self, path: int, replicate: int = 0) -> NoiseBundle:
        return NoiseBundle(self.grid, self.marks, self.dW[path], self.dB[replicate],
                           self.counts[path], self.seed)


def _cumulate(inc: np.ndarray) -> np.ndarray:
    out = np.zeros(inc.shape[:-2] + (inc.shape[-2] + 1, inc.shape[-1]))
    np.cumsum(inc, axis=-2, out=out[..., 1:, :])
    return out


def worker_count() -> int:
    raw = os.environ.get("DSDE_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _check_dims(d, l):
    for name, v in (("d", d), ("l", l)):
        if int(v) != v or v < 0:
            raise InvalidArgumentError(f"dimension {name} must be a nonnegative integer, got {v!r}")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def sample_noise(grid: TimeGrid, d: int, l: int, marks: MarkSpace, seed: int) -> NoiseBundle:
    """Draw one path of increments; identical inputs give bit-identical output."""
    _check_dims(d, l)
    rng = _rng(seed, _STREAM_SINGLE)
    sd = np.sqrt(grid.dt)
    dW = rng.standard_normal((grid.N, d)) * sd
    dB = rng.standard_normal((grid.N, l)) * sd
    counts = rng.poisson(marks.lam * grid.dt, size=(grid.N, marks.J))
    return NoiseBundle(grid, marks, dW, dB, counts, int(seed))


def _gaussian_block(seed, stream, chunk, rows, N, k, sd):
    return _rng(seed, stream, chunk).standard_normal((rows, N, k)) * sd


def _poisson_block(seed, chunk, rows, N, lam_dt):
    return _rng(seed, _STREAM_N, chunk).poisson(lam_dt, size=(rows, N, lam_dt.size))


def _chunks(total):
    return [(c, min(CHUNK, total - c * CHUNK)) for c in range((total + CHUNK - 1) // CHUNK)]


def sample_ensemble(grid: TimeGrid, d: int, l: int, marks: MarkSpace, seed: int,
                    paths: int, replicates: int = 1) -> NoiseEnsemble:
    """Draw a product noise ensemble.

    Paths are generated in fixed blocks of ``CHUNK`` rows, each block from its own
    spawned stream; the block layout is independent of ``DSDE_THREADS`` so any
    worker count reproduces the same arrays.
    """
    _check_dims(d, l)
    if paths < 1 or replicates < 1:
        raise InvalidArgumentError("paths and replicates must be >= 1")
    sd = np.sqrt(grid.dt)
    lam_dt = marks.lam * grid.dt
    wchunks = _chunks(paths)
    bchunks = _chunks(replicates)
    jobs = ([("W", c, r) for c, r in wchunks] + [("N", c, r) for c, r in wchunks]
            + [("B", c, r) for c, r in bchunks])

    def run(job):
        kind, c, rows = job
        if kind == "W":
            return _gaussian_block(seed, _STREAM_W, c, rows, grid.N, d, sd)
        if kind == "B":
            return _gaussian_block(seed, _STREAM_B, c, rows, grid.N, l, sd)
        return _poisson_block(seed, c, rows, grid.N, lam_dt)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, jobs))
    else:
        blocks = [run(j) for j in jobs]
    nw = len(wchunks)
    dW = np.concatenate(blocks[:nw], axis=0)
    counts = np.concatenate(blocks[nw:2 * nw], axis=0)
    dB = np.concatenate(blocks[2 * nw:], axis=0)
    return NoiseEnsemble(grid, marks, dW, counts, dB, int(seed))


def zero_ensemble(grid: TimeGrid, d: int = 0, l: int = 0, marks: MarkSpace = NO_MARKS,
                  paths: int = 1, replicates: int = 1) -> NoiseEnsemble:
    """All-zero increments; useful for deterministic reductions."""
    return NoiseEnsemble(grid, marks, np.zeros((paths, grid.N, d)),
                         np.zeros((paths, grid.N, marks.J), dtype=np.int64),
                         np.zeros((replicates, grid.N, l)), 0)


def compensated_increment(bundle: NoiseBundle, i: int, j: int) -> float:
    """``counts[i, j] - lambda_j * dt``."""
    N, J = bundle.counts.shape
    if not (0 <= i < N) or not (0 <= j < J):
        raise IndexError(f"interval {i} / mark {j} out of range for shape {(N, J)}")
    return float(bundle.counts[i, j] - bundle.marks.rates[j] * bundle.grid.dt)


def check_bundle(bundle: NoiseBundle, d: int, l: int) -> None:
    N = bundle.grid.N
    if bundle.dW.shape != (N, d) or bundle.dB.shape != (N, l) or bundle.counts.shape != (N, bundle.marks.J):
        raise ShapeMismatchError("noise bundle does not conform to grid and dimensions")

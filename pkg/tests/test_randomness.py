import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsde_lab.errors import InvalidArgumentError
from dsde_lab.randomness import (MarkSpace, NoiseBundle, compensated_increment, make_grid,
                                 sample_ensemble, sample_noise, zero_ensemble)


def test_grid_nodes():
    assert np.allclose(make_grid(1.0, 4).nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(make_grid(2.0, 1).nodes, [0, 2.0])


@pytest.mark.parametrize("T,N", [(0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5), (np.inf, 3)])
def test_grid_rejects(T, N):
    with pytest.raises(InvalidArgumentError):
        make_grid(T, N)


def test_mark_space_validation():
    with pytest.raises(InvalidArgumentError):
        MarkSpace(("a",), (0.0,))
    with pytest.raises(InvalidArgumentError):
        MarkSpace(("a", "a"), (1.0, 2.0))
    ms = MarkSpace(("a", "b"), (1.0, 3.0))
    assert ms.J == 2 and ms.total_mass == 4.0
    k = np.array([[1.0, 2.0]])
    assert ms.norm_sq(k) == pytest.approx(1 + 12)


def test_sample_noise_deterministic():
    g = make_grid(1.0, 8)
    ms = MarkSpace.single(2.0)
    a = sample_noise(g, 2, 1, ms, 42)
    b = sample_noise(g, 2, 1, ms, 42)
    c = sample_noise(g, 2, 1, ms, 43)
    for name in ("dW", "dB", "counts"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.dW, c.dW)
    assert a.dW.shape == (8, 2) and a.dB.shape == (8, 1) and a.counts.shape == (8, 1)


def test_ensemble_moments():
    g = make_grid(1.0, 4)
    M = 100_000
    nz = sample_ensemble(g, 1, 1, MarkSpace.single(2.0), 7, M, 1)
    tol = 3 * np.sqrt(g.dt / M)
    assert np.all(np.abs(nz.dW.mean(axis=0)) < tol)
    g1 = make_grid(1.0, 1)
    nz1 = sample_ensemble(g1, 0, 0, MarkSpace.single(2.0), 7, M, 1)
    assert abs(nz1.counts.mean() - 2.0) < 3 * np.sqrt(2.0 / M)


def test_ensemble_independent_of_workers(monkeypatch):
    g = make_grid(1.0, 5)
    ms = MarkSpace.single(1.0)
    monkeypatch.setenv("DSDE_THREADS", "1")
    a = sample_ensemble(g, 1, 1, ms, 3, 2500, 3)
    monkeypatch.setenv("DSDE_THREADS", "4")
    b = sample_ensemble(g, 1, 1, ms, 3, 2500, 3)
    assert np.array_equal(a.dW, b.dW) and np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.dB, b.dB)


def test_ensemble_prefix_stable():
    # a larger ensemble extends a smaller one with the same seed
    g = make_grid(1.0, 3)
    small = sample_ensemble(g, 1, 1, MarkSpace(), 5, 10, 2)
    big = sample_ensemble(g, 1, 1, MarkSpace(), 5, 20, 4)
    assert np.array_equal(small.dW, big.dW[:10])
    assert np.array_equal(small.dB, big.dB[:2])


def test_ensemble_paths_and_views():
    g = make_grid(1.0, 4)
    nz = sample_ensemble(g, 2, 1, MarkSpace.single(1.0), 0, 6, 3)
    assert nz.W_path().shape == (6, 5, 2)
    assert np.allclose(nz.W_path()[:, -1], nz.dW.sum(axis=1))
    assert nz.cell_dB.shape == (3, 1, 4, 1)
    b = nz.bundle(2, 1)
    assert np.array_equal(b.dW, nz.dW[2]) and np.array_equal(b.dB, nz.dB[1])
    z = zero_ensemble(g, 1, 1)
    assert not z.dW.any() and not z.dB.any()


@pytest.mark.parametrize("count,expected", [(1, 0.0), (3, 2.0), (0, -1.0)])
def test_compensated_increment(count, expected):
    g = make_grid(1.0, 2)
    b = NoiseBundle(g, MarkSpace.single(2.0), np.zeros((2, 0)), np.zeros((2, 0)),
                    np.array([[count], [0]]), 0)
    assert compensated_increment(b, 0, 0) == pytest.approx(expected)
    with pytest.raises(IndexError):
        compensated_increment(b, 2, 0)
    with pytest.raises(IndexError):
        compensated_increment(b, 0, 1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), N=st.integers(1, 6), d=st.integers(0, 2))
def test_sample_noise_shapes_and_determinism(seed, N, d):
    g = make_grid(1.0, N)
    a = sample_noise(g, d, 1, MarkSpace.single(1.0), seed)
    b = sample_noise(g, d, 1, MarkSpace.single(1.0), seed)
    assert a.dW.shape == (N, d)
    assert np.array_equal(a.dW, b.dW) and np.array_equal(a.counts, b.counts)
    assert np.all(a.counts >= 0)

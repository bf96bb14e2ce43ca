import numpy as np
import pytest

from dsde_lab.errors import CFLError, DomainTooSmallError, InvalidSystemError
from dsde_lab.randomness import MarkSpace
from dsde_lab.spdie import (MarkovianSystem, cfl_bound, compare_feynman_kac, estimate_field,
                            evaluate_u, markovian_system, solve_pide_fd)


def _ones(x):
    return np.ones(x.shape + (1,))


HEAT = markovian_system(g=lambda t, x, p: _ones(x), Phi=lambda x: x**2)


def test_probe_rejects_non_markovian():
    s = markovian_system(F=lambda t, x, p, q, k: x, l=1)
    s.F = lambda t, X, P, Y, Q, K: Y[..., 0]
    with pytest.raises(InvalidSystemError):
        MarkovianSystem(s)
    s2 = markovian_system(h=lambda t, x: _ones(x), d=0, marks=MarkSpace.single(1.0))
    s2.h = lambda t, X, P, Y, Q, K: P[..., None]
    with pytest.raises(InvalidSystemError):
        MarkovianSystem(s2)
    assert not MarkovianSystem(HEAT).has_backward_forcing


def test_constant_terminal():
    s = markovian_system(Phi=lambda x: np.full(x.shape, 5.0))
    u, se = evaluate_u(s, 0.0, [0.3], 1.0, steps=4, paths=200)
    assert u[0] == pytest.approx(5.0) and se[0] == pytest.approx(0.0, abs=1e-12)


def test_heat_examples():
    # u(t, x) = x^2 + (T - t) for dX = dW
    u, se = evaluate_u(HEAT, 0.0, [1.0], 1.0, steps=8, paths=20000, seed=1)
    assert abs(u[0] - 2.0) < 4 * se[0] + 1e-3
    u, _ = evaluate_u(HEAT, 1.0, [1.0], 1.0)
    assert u[0] == pytest.approx(1.0)


def test_stderr_scaling():
    _, s1 = evaluate_u(HEAT, 0.0, [0.0], 1.0, steps=4, paths=5000, seed=2)
    _, s4 = evaluate_u(HEAT, 0.0, [0.0], 1.0, steps=4, paths=20000, seed=2)
    assert s1[0] / s4[0] == pytest.approx(2.0, rel=0.2)


def test_replicated_field_shapes():
    s = markovian_system(G=lambda t, x, p, q, k: _ones(x), d=0, l=1, Phi=lambda x: x)
    assert MarkovianSystem(s).has_backward_forcing
    est = estimate_field(s, [(0.0, [0.0]), (0.5, [1.0])], 1.0, steps=4, paths=10, replicates=3)
    assert est.values.shape == (2, 3, 1)
    rows = list(est.rows())
    assert len(rows) == 6 and rows[3][:2] == (0.5, 1.0)
    # P_t = x - (B_T - B_t) per B path: replicates differ
    assert np.ptp(est.values[0, :, 0]) > 0


def test_fd_heat():
    fd = solve_pide_fd(HEAT, 1.0, (-4, 4), 201)
    for t, x in [(0.0, 0.0), (0.5, 1.0), (0.0, -1.5)]:
        assert fd(t, x) == pytest.approx(x**2 + 1 - t, abs=1e-3)


def test_fd_cfl_and_domain():
    xs = np.linspace(-4, 4, 201)
    dt = cfl_bound(HEAT, 1.0, xs)
    assert dt == pytest.approx(0.04**2, rel=0.2)
    with pytest.raises(CFLError) as exc:
        solve_pide_fd(HEAT, 1.0, (-4, 4), 201, nt=10)
    assert exc.value.max_dt is not None
    # padding is sized from the end times, so a mid-interval amplitude escapes it
    jump = markovian_system(h=lambda t, x: 3.0 * np.sin(np.pi * t) * _ones(x), d=0,
                            marks=MarkSpace.single(1.0))
    with pytest.raises(DomainTooSmallError):
        solve_pide_fd(jump, 1.0, (-1, 1), 41)


def test_compare_small_transport():
    s = markovian_system(f=lambda t, x, p: np.ones_like(x), d=0, Phi=np.sin)
    table = compare_feynman_kac(s, [(0.0, [0.0]), (0.5, [1.0])], 1.0,
                                dict(paths=2000, steps=8, seed=0), nx=201)
    assert table.ok
    assert table.rows[0].fd == pytest.approx(np.sin(1.0), abs=2e-3)

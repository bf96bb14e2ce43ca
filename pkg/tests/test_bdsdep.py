import numpy as np
import pytest

from dsde_lab.bdsdep import (BackwardProblem, GroupedRegressor, RegressionConfig, regress_conditional,
                             solve_backward)
from dsde_lab.errors import InsufficientPathsError, InvalidDataError, NumericalBlowupError
from dsde_lab.randomness import MarkSpace, make_grid, sample_ensemble


def test_regress_constant():
    x = np.random.default_rng(0).normal(size=(50, 2))
    res = regress_conditional(np.full(50, 7.0), x, RegressionConfig(degree=2, ridge=0.0))
    assert np.all(res.fitted == 7.0)


def test_regress_exact_linear():
    x = np.random.default_rng(1).uniform(-1, 1, 200)
    res = regress_conditional(3 * x, x, RegressionConfig(degree=1, ridge=0.0))
    assert np.allclose(res.raw_coefficients(x)[:, 0], [0.0, 3.0], atol=1e-10)
    assert np.allclose(res.predict([0.5]), 1.5)


def test_regress_projection_error():
    # residual of x^2 on {1, x} against the explicit empirical projection
    x = np.random.default_rng(2).uniform(-1, 1, 10_000)
    res = regress_conditional(x**2, x, RegressionConfig(degree=1, ridge=0.0))
    A = np.stack([np.ones_like(x), x], axis=1)
    coef = np.linalg.lstsq(A, x**2, rcond=None)[0]
    assert np.allclose(res.fitted[:, 0], A @ coef, atol=1e-10)
    # population value: Var(x^2) - Cov(x, x^2)^2 / Var(x) = 4/45 on uniform(-1, 1)
    assert np.mean((x**2 - res.fitted[:, 0]) ** 2) == pytest.approx(4 / 45, rel=0.05)


def test_regress_errors():
    x = np.arange(5.0)
    with pytest.raises(InsufficientPathsError):
        regress_conditional(x, x, RegressionConfig(degree=3))
    with pytest.raises(InvalidDataError):
        regress_conditional(np.array([1.0, np.nan, 2.0, 3.0, 4.0, 5.0]), np.arange(6.0),
                            RegressionConfig(degree=1))


def test_loo_fit_matches_refit():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1, 30, 1))
    y = rng.normal(size=(1, 30, 1))
    reg = GroupedRegressor(x, RegressionConfig(degree=1, ridge=0.0))
    loo = reg.fit_loo(y)
    keep = np.arange(30) != 4
    A = np.stack([np.ones(29), x[0, keep, 0]], axis=1)
    c = np.linalg.lstsq(A, y[0, keep, 0], rcond=None)[0]
    assert loo[0, 4, 0] == pytest.approx(c[0] + c[1] * x[0, 4, 0], rel=1e-8)


@pytest.fixture(scope="module")
def noise():
    return sample_ensemble(make_grid(1.0, 32), 1, 1, MarkSpace.single(1.0), 5, 4000, 2)


def _rms_max(err):
    return float(np.sqrt(np.mean(err**2, axis=(0, 1))).max())


def test_martingale_w(noise):
    W = noise.W_path()[None, :, :, 0]
    prob = BackwardProblem(W[:, :, -1, None], 1, features=W[..., None])
    sol = solve_backward(prob, noise)
    assert _rms_max(sol.P[..., 0] - W) < 0.03
    assert sol.Q[..., :-1, 0, 0].mean() == pytest.approx(1.0, abs=0.03)
    assert abs(sol.K[..., :-1, 0, 0].mean()) < 0.05


def test_backward_b_exact(noise):
    c = 0.7
    prob = BackwardProblem(0.0, 1, driver_g=lambda t, P, Q, K: np.full(P.shape + (1,), c))
    sol = solve_backward(prob, noise)
    B = noise.B_path()[:, None, :, 0]
    assert np.allclose(sol.P[..., 0], -c * (B[..., -1:] - B), atol=1e-10)
    assert np.all(sol.Q == 0) and np.all(sol.K == 0)


def test_compensated_jump(noise):
    Nt = noise.Ntilde_path()[None, :, :, 0]
    prob = BackwardProblem(Nt[:, :, -1, None], 1, features=Nt[..., None], marks=noise.marks)
    sol = solve_backward(prob, noise)
    assert _rms_max(sol.P[..., 0] - Nt) < 0.03
    assert sol.K[..., :-1, 0, 0].mean() == pytest.approx(1.0, abs=0.05)
    assert abs(sol.Q[..., :-1, 0, 0].mean()) < 0.05


def test_linear_ode():
    nz = sample_ensemble(make_grid(1.0, 64), 1, 0, MarkSpace(), 0, 50, 1)
    prob = BackwardProblem(1.0, 1, driver_f=lambda t, P, Q, K: 0.5 * P)
    sol = solve_backward(prob, nz)
    exact = np.exp(-0.5 * (1 - nz.grid.nodes))
    assert np.abs(sol.P[0, 0, :, 0] - exact).max() < 0.01


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_reports_step():
    nz = sample_ensemble(make_grid(1.0, 8), 1, 0, MarkSpace(), 0, 20, 1)
    prob = BackwardProblem(1.0, 1, driver_f=lambda t, P, Q, K: 1e300 * P * np.exp(P))
    with pytest.raises(NumericalBlowupError) as exc:
        solve_backward(prob, nz)
    assert exc.value.step is not None


def test_seeded_reproducible():
    nz = sample_ensemble(make_grid(1.0, 8), 1, 1, MarkSpace(), 9, 200, 2)
    prob = BackwardProblem(lambda n: n.W_path()[None, :, -1] ** 2, 1)
    a, b = solve_backward(prob, nz), solve_backward(prob, nz)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.Q, b.Q)

import numpy as np
import pytest

from dsde_lab.coeffs import (check_boundary_monotonicity, check_lipschitz, check_monotonicity,
                             linear_system)
from dsde_lab.errors import InvalidArgumentError, InvalidHamiltonianError
from dsde_lab.experiments import (DEMO_HAMILTONIAN, ParameterFamily, QuadraticHamiltonian,
                                  additive_drift_family, build_hamiltonian_system, continuity_study,
                                  ensemble_mean, hamiltonian_bvp, hamiltonian_demo, linear_bvp)
from dsde_lab.fbdsdep import HomotopyConfig
from dsde_lab.randomness import NO_MARKS, MarkSpace, make_grid, zero_ensemble


def test_hessian_reads_back_coefficients():
    ham = QuadraticHamiltonian(a=0.3, b=0.7, e_P=1.0)
    H = ham.hessian_fd(np.array([0.2, -0.1, 0.4, 0.3, -0.5]))
    assert np.allclose(np.diag(H), [0.7, -0.3, 0.7, -0.3, -0.3], atol=1e-6)
    assert np.allclose(H - np.diag(np.diag(H)), 0.0, atol=1e-6)


@pytest.mark.parametrize("a,b", [(-0.5, 0.5), (0.5, 0.0), (1.0, 0.5), (np.nan, 0.5)])
def test_invalid_hamiltonian(a, b):
    with pytest.raises(InvalidHamiltonianError):
        build_hamiltonian_system(QuadraticHamiltonian(a=a, b=b))


def test_hamiltonian_checkers_pass():
    sys = build_hamiltonian_system(DEMO_HAMILTONIAN, 1, 1, MarkSpace.single(1.0))
    assert check_monotonicity(sys).violation_count == 0
    assert all(r.violation_count == 0 for r in check_boundary_monotonicity(sys))
    assert all(r.violation_count == 0 for r in check_lipschitz(sys).values())


def test_linear_bvp_examples():
    ts = np.linspace(0, 1, 5)
    # x' = 1, p' = 0, x(0) = 0, p(1) = x(1): x = t, p = 1
    out = linear_bvp(np.zeros((2, 2)), np.array([1.0, 0.0]), 0.0, 0.0, 1.0, 0.0, 1.0, ts)
    assert np.allclose(out[:, 0], ts) and np.allclose(out[:, 1], 1.0)
    with pytest.raises(InvalidArgumentError):
        # constant x = p with p(1) = x(1) + 1: no solution
        linear_bvp(np.zeros((2, 2)), np.zeros(2), 1.0, 0.0, 1.0, 1.0, 1.0, ts)


def test_hamiltonian_bvp_satisfies_ode():
    ts = np.linspace(0, 1, 2001)
    z = hamiltonian_bvp(DEMO_HAMILTONIAN, 1.0, ts)
    ham = DEMO_HAMILTONIAN
    dx, dp = np.gradient(z[:, 0], ts), np.gradient(z[:, 1], ts)
    assert np.allclose(dx[1:-1], -ham.a * z[1:-1, 1] + ham.e_P, atol=1e-5)
    assert np.allclose(dp[1:-1], -ham.b * z[1:-1, 0], atol=1e-5)
    assert z[0, 0] == pytest.approx(-z[0, 1] + ham.psi1)
    assert z[-1, 1] == pytest.approx(z[-1, 0])


def test_ensemble_mean_stderr():
    A = np.zeros((3, 4, 2))
    m, s = ensemble_mean(A)
    assert np.all(m == 0) and np.all(s == 0)
    rng = np.random.default_rng(0)
    B = rng.normal(size=(1, 40000, 1))
    m, s = ensemble_mean(B)
    assert s[0] == pytest.approx(1 / 200, rel=0.05)


def test_family_validation():
    base = linear_system(1, 0, 0, NO_MARKS, {}, mu1=1.0, beta1=1.0)
    with pytest.raises(InvalidArgumentError):
        ParameterFamily(base, lambda a: base, (0.1, 0.2))
    with pytest.raises(InvalidArgumentError):
        ParameterFamily(base, lambda a: base, (0.1, 0.0))
    fam = ParameterFamily(base, lambda a: base, (0.1, 0.01))
    assert fam.member(0) is base


def test_constant_family_zero_distance():
    base = linear_system(1, 0, 0, NO_MARKS, dict(f_P=-1.0, F_X=-1.0, Phi_X=1.0), mu1=1.0, beta1=1.0)
    nz = zero_ensemble(make_grid(1.0, 8))
    table = continuity_study(ParameterFamily(base, lambda a: base, (0.1, 0.01)), nz,
                             HomotopyConfig(inner_tol=1e-12))
    assert table.distances == [0.0, 0.0]


def test_additive_family_quadratic():
    base = linear_system(1, 0, 0, NO_MARKS, dict(f_P=-1.0, F_X=-1.0, Phi_X=1.0), mu1=1.0, beta1=1.0)
    nz = zero_ensemble(make_grid(1.0, 8))
    table = continuity_study(additive_drift_family(base, (0.1, 0.01)), nz, HomotopyConfig(inner_tol=1e-14))
    assert table.strictly_decreasing()
    assert table.quadratic_spread() < 1.05


def test_deterministic_demo():
    ham = DEMO_HAMILTONIAN
    nz = zero_ensemble(make_grid(1.0, 16))
    _, rep, trace = hamiltonian_demo(ham, nz, HomotopyConfig(inner_tol=1e-10), n_samples=50)
    assert rep.monotonicity_violations == rep.boundary_violations == rep.lipschitz_violations == 0
    assert rep.final_alpha == 1.0 and trace.final_alpha == 1.0
    assert rep.max_error < 0.05
    assert len(list(rep.rows(nz.grid.nodes))) == 17

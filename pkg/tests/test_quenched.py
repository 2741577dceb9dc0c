import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradphi.calculus import div_star, grad
from gradphi.errors import DomainError, ResourceError, ShapeError
from gradphi.greens import resolvent_apply
from gradphi.potential import make_dipole, make_quadratic
from gradphi.quenched import (QuenchedProblem, block_fixed_point_residual, direct_solve_one_variable,
                              direct_solve_two_variable, fitted_ratio, gaussian_hs_check, one_variable_matrix,
                              one_variable_operator, random_configuration, solve_one_variable,
                              solve_two_variable, cumulant_bound_constant, two_variable_matrix,
                              two_variable_operator, verify_x2_bound)
from gradphi.torus import TorusLattice


def problem(L=8, a=0.25, rho_s=0.0, m=0.1, seed=0, two=False, d=2):
    lat = TorusLattice(d, L)
    rng = np.random.default_rng(seed)
    phi = random_configuration(lat, 1.0, seed)
    shape = (d,) + (lat.shape * 2 if two else lat.shape)
    return QuenchedProblem(lat, make_dipole(a, d), phi, rho_s, m, rng.standard_normal(shape))


def test_fitted_ratio_of_geometric_sequence():
    inc = [5.0] + [0.3**k for k in range(20)]
    assert fitted_ratio(inc) == pytest.approx(0.3)
    assert fitted_ratio([1.0, 0.0, 0.0]) == 0.0


def test_quadratic_potential_needs_one_step(rng):
    lat = TorusLattice(2, 8)
    p = QuenchedProblem(lat, make_quadratic(2.0, 2), rng.standard_normal(lat.shape), 0.3, 0.2,
                        rng.standard_normal((2,) + lat.shape))
    rep = solve_one_variable(p)
    assert rep.converged and rep.iterations == 1
    Phi = resolvent_apply(div_star(p.rhs), lat.shape, 2.0, 2.0 * 0.3 + 0.04)
    assert np.allclose(rep.solution, grad(Phi), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 5.0))
def test_stencil_operator_matches_assembled_matrix(seed, rho_s):
    p = problem(L=6, rho_s=rho_s, seed=seed)
    Phi = np.random.default_rng(seed + 1).standard_normal(p.lat.shape)
    A = one_variable_matrix(p)
    assert np.allclose(A @ Phi.reshape(-1), one_variable_operator(p, Phi).reshape(-1), atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_one_variable_matches_direct_solve(seed):
    p = problem(L=8, seed=seed)
    rep = solve_one_variable(p, tol=1e-11)
    assert rep.converged and not rep.flags
    direct = direct_solve_one_variable(p)
    assert np.linalg.norm(rep.solution - direct) <= 1e-8 * np.linalg.norm(direct)
    A = one_variable_matrix(p)
    target = div_star(p.rhs).reshape(-1)
    res = np.linalg.norm(A @ rep.potential_field.reshape(-1) - target) / np.linalg.norm(target)
    assert res < 1e-10
    assert rep.ratio <= 0.4 * 1.05


@pytest.mark.parametrize("rho_s", [0.0, 0.1, 1.0, 10.0, 100.0])
def test_one_variable_ratio_uniform_in_spectral_parameter(rho_s):
    rep = solve_one_variable(problem(L=8, rho_s=rho_s, seed=4))
    assert rep.converged and rep.ratio <= 0.4 * 1.05


@pytest.mark.parametrize("a", [0.1, 0.25, 0.45])
def test_one_variable_ratio_below_coupling_bound(a):
    rep = solve_one_variable(problem(L=8, a=a, seed=2))
    assert rep.converged and rep.ratio <= (1 - (1 - a) / (1 + a)) * 1.05


def test_one_variable_input_checks(rng):
    p = problem(L=4, two=True)
    with pytest.raises(ShapeError):
        solve_one_variable(p)
    with pytest.raises(DomainError):
        solve_one_variable(problem(L=4), tol=0.0)
    lat = TorusLattice(2, 4)
    with pytest.raises(DomainError):
        QuenchedProblem(lat, make_dipole(0.2, 2), np.zeros(lat.shape), -1.0, 0.1, np.zeros((2, 4, 4)))
    with pytest.raises(DomainError):
        QuenchedProblem(lat, make_dipole(0.2, 2), np.zeros(lat.shape), 0.0, 0.0, np.zeros((2, 4, 4)))
    with pytest.raises(ShapeError):
        QuenchedProblem(lat, make_dipole(0.2, 2), np.zeros((4, 5)), 0.0, 0.1, np.zeros((2, 4, 4)))


def test_two_variable_stencils_match_assembled_matrix(rng):
    p = problem(L=4, two=True, rho_s=0.5, seed=3)
    Psi1, Psi2 = rng.standard_normal((2,) + p.lat.shape * 2)
    r1, r2 = two_variable_operator(p, Psi1, Psi2)
    A = two_variable_matrix(p)
    ref = A @ np.concatenate([Psi1.reshape(-1), Psi2.reshape(-1)])
    assert np.allclose(np.concatenate([r1.reshape(-1), r2.reshape(-1)]), ref, atol=1e-10)


@pytest.mark.parametrize("seed", range(2))
def test_two_variable_matches_direct_solve(seed):
    p = problem(L=4, two=True, seed=seed)
    rep = solve_two_variable(p, tol=1e-11)
    assert rep.converged and not rep.flags
    direct = direct_solve_two_variable(p)
    assert np.linalg.norm(rep.solution - direct) <= 1e-8 * np.linalg.norm(direct)
    assert block_fixed_point_residual(p, rep.solution) < 1e-9
    assert rep.ratio <= 0.8 * 1.05


def test_two_variable_in_one_dimension():
    rep = solve_two_variable(problem(L=8, two=True, d=1, seed=5))
    assert rep.converged and rep.ratio <= 0.8 * 1.05


def test_two_variable_flags_threshold_violation():
    rep = solve_two_variable(problem(L=4, a=0.45, two=True, seed=1))
    assert "threshold violated" in rep.flags
    strong = solve_two_variable(problem(L=4, a=0.9, two=True, seed=1), max_iter=200)
    assert "threshold violated" in strong.flags


def test_two_variable_resource_limits():
    with pytest.raises(ResourceError):
        direct_solve_two_variable(problem(L=12, two=True))
    with pytest.raises(ShapeError):
        solve_two_variable(problem(L=4))


def test_x2_bound_holds():
    rep = verify_x2_bound(problem(L=4, two=True, seed=2))
    assert rep.converged and rep.holds and rep.observed_ratio <= 1.0
    assert rep.bound == pytest.approx(rep.rhs_norm / (2 * 0.75 - 1.25))


def test_x2_bound_edge_cases():
    p = problem(L=4, two=True)
    p.rhs = np.zeros_like(p.rhs)
    rep = verify_x2_bound(p)
    assert rep.holds and rep.solution_norm == 0.0
    with pytest.raises(DomainError):
        verify_x2_bound(problem(L=4, a=0.4, two=True))


def test_cumulant_bound_constant():
    # lam = 0.75, Lam = 1.25:  2 / (0.5625 * 0.25)
    assert cumulant_bound_constant(0.75, 1.25) == pytest.approx(128.0 / 9.0)
    with pytest.raises(DomainError):
        cumulant_bound_constant(0.5, 1.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.05, 2.0), st.integers(0, 10**6))
def test_gaussian_hs_routes_agree(c, m, seed):
    lat = TorusLattice(2, 6)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2,) + lat.shape)
    f -= f.mean()
    g -= g.mean()
    rep = gaussian_hs_check(lat, c, m, f, g)
    assert rep.max_discrepancy <= 1e-10 * max(1.0, abs(rep.dense)) / min(1.0, m**2)


def test_gaussian_hs_requires_mean_zero(rng):
    lat = TorusLattice(2, 4)
    with pytest.raises(DomainError):
        gaussian_hs_check(lat, 1.0, 0.1, np.ones(lat.shape), np.zeros(lat.shape))
    with pytest.raises(DomainError):
        gaussian_hs_check(lat, 1.0, 0.0, np.zeros(lat.shape), np.zeros(lat.shape))

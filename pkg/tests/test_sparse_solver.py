import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandsplice.sparse_solver import (BpdnProblem, RankDeficientError, SolverConfig, kkt_satisfied,
                                      soft_threshold, solve_bpdn, solve_least_squares)
from oracles import bpdn_objective, coordinate_descent_bpdn, normal_equations


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    z = soft_threshold(2 * np.exp(1j * np.pi / 4), 0.5)
    assert z == pytest.approx(1.5 * np.exp(1j * np.pi / 4))


@given(v=st.complex_numbers(max_magnitude=1e3, allow_nan=False), t=st.floats(0, 1e3))
def test_soft_threshold_shrinks_and_keeps_phase(v, t):
    z = soft_threshold(v, t)
    assert abs(z) == pytest.approx(max(abs(v) - t, 0.0), abs=1e-9)
    if z != 0:
        assert np.angle(z) == pytest.approx(np.angle(v), abs=1e-9)


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


def test_identity_problem_is_soft_threshold():
    sol = solve_bpdn(BpdnProblem(np.eye(3), np.array([5.0, 0, 0]), 1.0))
    np.testing.assert_allclose(sol.x, [4, 0, 0], atol=1e-9)
    assert sol.converged


def test_large_regularizer_gives_zero(rng):
    A = rng.standard_normal((10, 15))
    y = rng.standard_normal(10)
    sol = solve_bpdn(BpdnProblem(A, y, np.max(np.abs(A.T @ y)) * 1.0001))
    assert not sol.x.any()


def test_zero_observation_gives_zero(rng):
    sol = solve_bpdn(BpdnProblem(rng.standard_normal((6, 9)), np.zeros(6), 0.1))
    assert not sol.x.any()


@pytest.mark.parametrize("method", ["sparsa", "homotopy"])
def test_sparse_support_recovery_matches_oracle(method):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((8, 20))
    x0 = np.zeros(20)
    x0[[4, 13]] = [1.5, -2.0]
    y = A @ x0
    reg = 1e-3
    sol = solve_bpdn(BpdnProblem(A, y, reg), SolverConfig(method=method))
    assert set(np.flatnonzero(np.abs(sol.x) > 1e-2)) == {4, 13}
    xo = coordinate_descent_bpdn(A, y, reg)
    fo = bpdn_objective(A, y, reg, xo)
    assert abs(sol.objective - fo) <= 1e-6 * fo


@given(seed=st.integers(0, 2**32 - 1), cplx=st.booleans())
def test_objective_matches_coordinate_descent(seed, cplx):
    rng = np.random.default_rng(seed)
    m, n = 12, 25
    A = rng.standard_normal((m, n)) + (1j * rng.standard_normal((m, n)) if cplx else 0)
    y = A[:, :3] @ rng.standard_normal(3) + 0.05 * rng.standard_normal(m)
    reg = 0.1 * np.max(np.abs(A.conj().T @ y))
    sol = solve_bpdn(BpdnProblem(A, y, reg))
    xo = coordinate_descent_bpdn(A, y, reg)
    fo = bpdn_objective(A, y, reg, xo)
    assert sol.converged
    assert abs(sol.objective - fo) <= 1e-6 * fo
    g = A.conj().T @ (A @ sol.x - y)
    assert kkt_satisfied(g, sol.x, np.ones(n), reg, 1e-4)


def test_weighted_problem_matches_oracle():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((15, 30))
    y = rng.standard_normal(15)
    w = rng.uniform(0.5, 2.0, 30)
    reg = 0.2
    sol = solve_bpdn(BpdnProblem(A, y, reg, w))
    xo = coordinate_descent_bpdn(A, y, reg, w)
    fo = bpdn_objective(A, y, reg, xo, w)
    assert abs(sol.objective - fo) <= 1e-6 * fo


@pytest.mark.parametrize("method", ["sparsa", "homotopy"])
def test_free_columns_are_unpenalized(method):
    rng = np.random.default_rng(4)
    A = rng.standard_normal((20, 12))
    A[:, 0] = 1.0
    y = 3.0 + A[:, 5] * 0.7
    w = np.ones(12)
    w[0] = 0.0
    sol = solve_bpdn(BpdnProblem(A, y, 0.5, w), SolverConfig(method=method))
    xo = coordinate_descent_bpdn(A, y, 0.5, w)
    assert sol.objective == pytest.approx(bpdn_objective(A, y, 0.5, xo, w), rel=1e-6)
    # the free column is fit exactly: its gradient vanishes
    assert abs(A[:, 0] @ (A @ sol.x - y)) < 1e-8


def test_homotopy_rejects_complex():
    A = np.eye(2) * (1 + 1j)
    with pytest.raises(ValueError):
        solve_bpdn(BpdnProblem(A, np.ones(2, complex), 0.1), SolverConfig(method="homotopy"))


def test_debug_history_is_monotone():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((30, 60))
    y = rng.standard_normal(30)
    sol = solve_bpdn(BpdnProblem(A, y, 0.3), SolverConfig(debug=True, continuation=False))
    h = np.array(sol.history)
    assert h.size > 1
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))


def test_working_set_path_matches_oracle():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((25, 40))
    y = A[:, [3, 17]] @ [1.0, -1.0] + 0.01 * rng.standard_normal(25)
    reg = 0.05
    sol = solve_bpdn(BpdnProblem(A, y, reg), SolverConfig(working_set_min=10))
    fo = bpdn_objective(A, y, reg, coordinate_descent_bpdn(A, y, reg))
    assert sol.converged
    assert abs(sol.objective - fo) <= 1e-6 * fo


def test_problem_validation():
    with pytest.raises(ValueError):
        BpdnProblem(np.eye(2), np.ones(3), 1.0)
    with pytest.raises(ValueError):
        BpdnProblem(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(ValueError):
        BpdnProblem(np.eye(2), np.ones(2), 1.0, weights=[-1, 1])
    with pytest.raises(ValueError):
        BpdnProblem(np.eye(2), np.array([1.0, np.nan]), 1.0)
    with pytest.raises(ValueError):
        SolverConfig(method="ista")
    with pytest.raises(ValueError):
        SolverConfig(kkt_tolerance=0.0)


def test_iteration_budget_reports_non_convergence():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((30, 80))
    y = rng.standard_normal(30)
    sol = solve_bpdn(BpdnProblem(A, y, 1e-3), SolverConfig(max_iterations=2, continuation=False))
    assert not sol.converged


def test_least_squares_identity(rng):
    y = rng.standard_normal(5)
    np.testing.assert_allclose(solve_least_squares(np.eye(5), y), y)


def test_least_squares_exact_in_column_space(rng):
    A = rng.standard_normal((7, 3)) + 1j * rng.standard_normal((7, 3))
    r = np.array([1.0, -2j, 0.5])
    np.testing.assert_allclose(solve_least_squares(A, A @ r), r, atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
def test_least_squares_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 2))
    y = rng.standard_normal(4)
    np.testing.assert_allclose(solve_least_squares(A, y), normal_equations(A, y), rtol=1e-8, atol=1e-10)


def test_least_squares_rank_deficient():
    A = np.ones((4, 2))
    with pytest.raises(RankDeficientError):
        solve_least_squares(A, np.ones(4))
    with pytest.raises(RankDeficientError):
        solve_least_squares(np.ones((1, 2)), np.ones(1))

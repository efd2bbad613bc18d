import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kubecs.linalg import KroneckerOperator, MatrixOperator, make_rng
from kubecs.solvers import (
    SolveOptions,
    _crossover,
    basis_pursuit,
    check_adjoint,
    irls,
    rwl1,
    rwl1_weights,
    soft_threshold,
    weighted_bp,
)

from oracles import lp_weighted_l1, vertex_enumeration


def random_instance(rng, n_max=32, m_max=24):
    n = int(rng.integers(4, n_max + 1))
    m = int(rng.integers(1, min(m_max, n) + 1))
    A = rng.standard_normal((m, n))
    y = rng.standard_normal(m)
    w = rng.uniform(0.1, 2.0, n)
    return A, y, w


def sparse_instance(seed, n=64, m=32, k=3):
    rng = make_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    s = np.zeros(n)
    s[rng.choice(n, k, replace=False)] = rng.choice([-1.0, 1.0], k)
    return A, s


# -- oracle sanity: the two references agree with each other ------------------


def test_oracles_agree_on_tiny_problems():
    rng = make_rng(99)
    for _ in range(10):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, min(3, n) + 1))
        A, y, w = rng.standard_normal((m, n)), rng.standard_normal(m), rng.uniform(0.2, 2, n)
        assert vertex_enumeration(A, y, w)[0] == pytest.approx(lp_weighted_l1(A, y, w)[0], rel=1e-9)


# -- weighted_bp ---------------------------------------------------------------


def test_identity_operator():
    rep = weighted_bp(np.eye(2), [3.0, 0.0], [1.0, 1.0])
    np.testing.assert_allclose(rep.coefficients, [3, 0], atol=1e-9)
    assert rep.objective == pytest.approx(3)
    assert rep.converged


def test_two_vertex_problem():
    rep = weighted_bp([[1.0, 1.0]], [2.0], [1.0, 2.0])
    np.testing.assert_allclose(rep.coefficients, [2, 0], atol=1e-9)
    assert rep.objective == pytest.approx(2)
    assert vertex_enumeration(np.array([[1.0, 1.0]]), np.array([2.0]), np.array([1.0, 2.0]))[0] == pytest.approx(2)


def test_zero_measurements():
    A = make_rng(0).standard_normal((5, 9))
    rep = weighted_bp(A, np.zeros(5), np.linspace(0.5, 1, 9))
    assert np.all(rep.coefficients == 0) and rep.objective == 0 and rep.converged


def test_dimension_and_weight_errors():
    with pytest.raises(ValueError):
        weighted_bp(np.eye(3), np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        weighted_bp(np.eye(3), np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        weighted_bp(np.eye(3), np.ones(3), [1.0, 0.0, 1.0])


def test_matches_vertex_enumeration():
    rng = make_rng(123)
    for _ in range(15):
        n = int(rng.integers(3, 7))
        m = int(rng.integers(1, min(3, n) + 1))
        A, y, w = rng.standard_normal((m, n)), rng.standard_normal(m), rng.uniform(0.2, 2, n)
        ref, _ = vertex_enumeration(A, y, w)
        rep = weighted_bp(A, y, w)
        assert rep.objective == pytest.approx(ref, rel=1e-4)
        assert rep.residual_norm <= 1e-6 * max(1.0, np.linalg.norm(y))


def test_matches_lp_oracle():
    rng = make_rng(2024)
    for _ in range(50):
        A, y, w = random_instance(rng)
        ref, _ = lp_weighted_l1(A, y, w)
        rep = weighted_bp(A, y, w)
        assert abs(rep.objective - ref) <= 1e-4 * ref
        assert rep.converged


def test_kronecker_operator_input():
    rng = make_rng(31)
    op = KroneckerOperator([rng.standard_normal((2, 3)), rng.standard_normal((3, 4))])
    A = np.kron(*op.factors)
    y = rng.standard_normal(6)
    w = rng.uniform(0.5, 1.5, 12)
    assert weighted_bp(op, y, w).objective == pytest.approx(lp_weighted_l1(A, y, w)[0], rel=1e-4)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_weight_scaling_invariance(c):
    rng = make_rng(77)
    for _ in range(20):
        A, y, w = random_instance(rng)
        base = weighted_bp(A, y, w)
        scaled = weighted_bp(A, y, c * w)
        assert np.max(np.abs(scaled.coefficients - base.coefficients)) <= 1e-5
        assert scaled.objective == pytest.approx(c * base.objective, abs=1e-5)


def test_unit_weights_is_plain_bp():
    rng = make_rng(5)
    for _ in range(20):
        A, y, _ = random_instance(rng)
        n = A.shape[1]
        rep = weighted_bp(A, y, np.ones(n))
        _, ref = lp_weighted_l1(A, y, np.ones(n))
        np.testing.assert_allclose(rep.coefficients, basis_pursuit(A, y).coefficients, atol=1e-12)
        # generic Gaussian instances have a unique minimizer
        assert np.max(np.abs(rep.coefficients - ref)) <= 1e-6


def test_exact_recovery_phase():
    ok = 0
    for seed in range(100):
        A, s = sparse_instance(seed)
        rep = basis_pursuit(A, A @ s)
        ok += np.max(np.abs(rep.coefficients - s)) <= 1e-4
    assert ok >= 95


def test_nonconvergence_is_reported():
    rng = make_rng(8)
    A = rng.standard_normal((20, 40))
    y = rng.standard_normal(20)
    rep = weighted_bp(A, y, np.ones(40), SolveOptions(max_iterations=1, polish_every=50))
    assert rep.iterations == 1
    assert rep.converged is False or rep.residual_norm <= 1e-6 * np.linalg.norm(y)


def test_converged_implies_feasible():
    rng = make_rng(9)
    for _ in range(10):
        A, y, w = random_instance(rng)
        rep = weighted_bp(A, y, w)
        if rep.converged:
            assert rep.residual_norm / max(1, np.linalg.norm(y)) <= 1e-6


def test_infeasible_system_not_converged():
    A = np.array([[1.0, 0.0], [1.0, 0.0]])
    rep = weighted_bp(A, [1.0, 2.0], [1.0, 1.0])
    assert not rep.converged


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, 0.5, 2.0]), 1.0), [-2, 0, 1])


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(feasibility_tol=0)
    with pytest.raises(ValueError):
        SolveOptions(max_iterations=0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_crossover_reaches_vertex_without_raising_l1(seed):
    rng = make_rng(seed)
    m, n = int(rng.integers(1, 8)), int(rng.integers(8, 20))
    A = rng.standard_normal((m, n))
    y = rng.standard_normal(m)
    start = np.linalg.pinv(A) @ y  # feasible and dense
    cand, AS, support = _crossover(MatrixOperator(A), y, start, None, 1e-6)
    assert np.linalg.norm(A @ cand - y) <= 1e-8 * max(1, np.linalg.norm(y))
    assert np.abs(cand).sum() <= np.abs(start).sum() + 1e-9
    assert support.size <= np.linalg.matrix_rank(A)
    np.testing.assert_array_equal(np.flatnonzero(cand), support)


# -- rwl1 ----------------------------------------------------------------------


def test_rwl1_single_round_is_bp():
    rng = make_rng(3)
    for _ in range(5):
        A, y, _ = random_instance(rng)
        one = rwl1(A, y, SolveOptions(rwl1_rounds=1))
        bp = basis_pursuit(A, y)
        assert one.objective == pytest.approx(bp.objective, rel=1e-6)
        np.testing.assert_allclose(one.coefficients, bp.coefficients, atol=1e-6)


def test_rwl1_weight_formula():
    np.testing.assert_allclose(rwl1_weights([2.0, 0.0], 0.1), [1 / 2.1, 10.0])


def test_rwl1_recovers_one_sparse():
    rng = make_rng(12)
    A = rng.standard_normal((10, 30)) / np.sqrt(10)
    s = np.zeros(30)
    s[7] = -2.5
    y = A @ s
    assert np.max(np.abs(basis_pursuit(A, y).coefficients - s)) <= 1e-6
    rep = rwl1(A, y)
    assert set(np.flatnonzero(np.abs(rep.coefficients) > 1e-6)) == {7}
    assert rep.residual_norm <= 1e-6 * max(1, np.linalg.norm(y))
    assert len(rep.rounds) == 4


def test_rwl1_zero_input():
    rep = rwl1(np.ones((2, 4)), np.zeros(2))
    assert np.all(rep.coefficients == 0) and rep.converged


def test_rwl1_not_worse_than_bp_on_compressible_signals():
    n, m = 64, 24
    snr_bp, snr_rw = [], []
    for seed in range(50):
        rng = make_rng(1000 + seed)
        A = rng.standard_normal((m, n)) / np.sqrt(m)
        s = rng.permutation(np.arange(1, n + 1) ** -1.5) * rng.choice([-1.0, 1.0], n)
        y = A @ s
        for rep, out in ((basis_pursuit(A, y), snr_bp), (rwl1(A, y), snr_rw)):
            out.append(20 * np.log10(np.linalg.norm(s) / np.linalg.norm(rep.coefficients - s)))
    assert np.median(snr_rw) >= np.median(snr_bp)


# -- irls ----------------------------------------------------------------------


def test_irls_identity():
    y = np.array([1.5, -2.0, 0.0, 4.0])
    rep = irls(np.eye(4), y)
    np.testing.assert_allclose(rep.coefficients, y, atol=1e-12)
    assert rep.iterations == 1 and rep.converged


def test_irls_two_vertex():
    rep = irls([[1.0, 1.0]], [2.0])
    assert rep.objective == pytest.approx(2.0, abs=1e-3)
    assert rep.residual_norm <= 1e-9


def test_irls_zero():
    rep = irls(make_rng(1).standard_normal((3, 6)), np.zeros(3))
    assert np.all(rep.coefficients == 0)


def test_irls_recovers_sparse():
    A, s = sparse_instance(4)
    rep = irls(A, A @ s)
    assert np.max(np.abs(rep.coefficients - s)) <= 1e-4


def test_irls_near_lp_optimum():
    rng = make_rng(6)
    for _ in range(10):
        A, y, _ = random_instance(rng, 16, 8)
        ref, _ = lp_weighted_l1(A, y, np.ones(A.shape[1]))
        assert irls(A, y).objective == pytest.approx(ref, rel=1e-3)


def test_irls_matrix_free_path():
    rng = make_rng(10)
    op = KroneckerOperator([rng.standard_normal((3, 4)), rng.standard_normal((4, 8))])
    y = rng.standard_normal(12)
    dense = irls(op, y)
    free = irls(op, y, cap=1)
    assert free.objective == pytest.approx(dense.objective, rel=1e-4)


# -- adjoint check --------------------------------------------------------------


def test_check_adjoint():
    rng = make_rng(0)
    assert check_adjoint(MatrixOperator(np.eye(5)), rng) <= 1e-15
    assert check_adjoint(MatrixOperator(rng.standard_normal((8, 6))), rng) <= 1e-10
    op = KroneckerOperator([rng.standard_normal((2, 3)), rng.standard_normal((4, 2)), rng.standard_normal((3, 3))])
    assert check_adjoint(op, rng) <= 1e-10

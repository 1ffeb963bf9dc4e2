import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmvfacs.errors import InvalidSparsity, NonConvergence
from mmvfacs.model import make_instance
from mmvfacs.solvers import (SolverConfig, SolverId, StepRule, default_bpdn_lambda, focuss_diversity,
                             group_lasso_fista, group_soft_threshold, mfocuss_iterates, run_solver,
                             solve_mbpdn, solve_mfocuss, solve_momp, solve_msp, solve_oracle)

ALL = [SolverId.MOMP, SolverId.MSP, SolverId.MFOCUSS, SolverId.MBPDN]
LONG = SolverConfig(max_iter=5000)


def sparse_rows(N, rows, L, seed=0):
    X = np.zeros((N, L))
    X[rows] = np.random.default_rng(seed).standard_normal((len(rows), L)) + 3.0
    return X


def test_config_validation_and_round_trip():
    cfg = SolverConfig(max_iter=50, bpdn_step_rule="backtracking")
    assert cfg.bpdn_step_rule is StepRule.BACKTRACKING
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg
    assert SolverConfig.from_dict(None) == SolverConfig()
    for bad in ({"max_iter": 0}, {"tol": 0}, {"focuss_p": 1.5}, {"bpdn_lambda": -1}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


@pytest.mark.parametrize("sid", ALL)
def test_identity_recovers_top_rows(sid):
    X = sparse_rows(10, [2, 7], 3)
    out = run_solver(sid, np.eye(10), X, 2, LONG)
    np.testing.assert_array_equal(out.support, [2, 7])
    np.testing.assert_allclose(out.X_hat, X, atol=1e-10)


@pytest.mark.parametrize("sid", ALL)
def test_orthogonal_matrix_recovers(sid):
    Q, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((12, 12)))
    X = sparse_rows(12, [0, 5, 9], 4, seed=1)
    out = run_solver(sid, Q, Q @ X, 3, LONG)
    np.testing.assert_array_equal(out.support, [0, 5, 9])


def test_momp_single_atom_exact():
    inst = make_instance(4, 8, 1, 2, seed=3)
    out = solve_momp(inst.A, inst.B, 1)
    np.testing.assert_array_equal(out.support, inst.support)
    assert np.linalg.norm(inst.X - out.X_hat) <= 1e-10 * np.linalg.norm(inst.X)


@pytest.mark.parametrize("seed", range(5))
def test_momp_matches_exhaustive_oracle(seed, brute_support):
    inst = make_instance(8, 12, 2, 3, seed=seed)
    out = solve_momp(inst.A, inst.B, 2)
    np.testing.assert_array_equal(out.support, brute_support(inst.A, inst.B, 2))


def test_momp_ties_pick_smaller_index():
    A = np.eye(4)
    B = np.array([[1.0], [2.0], [2.0], [0.0]])
    np.testing.assert_array_equal(solve_momp(A, B, 1).support, [1])


def test_msp_identity_one_iteration():
    X = sparse_rows(8, [1, 4], 2)
    out = solve_msp(np.eye(8), X, 2)
    assert out.iterations == 1
    np.testing.assert_array_equal(out.support, [1, 4])


@pytest.mark.parametrize("seed", range(5))
def test_msp_noiseless_exact(seed, brute_support):
    inst = make_instance(10, 14, 2, 3, seed=seed)
    out = solve_msp(inst.A, inst.B, 2)
    np.testing.assert_array_equal(out.support, brute_support(inst.A, inst.B, 2))
    assert out.residual_fro <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_msp_residual_history_non_increasing(seed):
    inst = make_instance(12, 30, 4, 2, "gaussian", 10.0, seed)
    out = solve_msp(inst.A, inst.B, 4)
    assert np.all(np.diff(out.history) <= 0)
    assert out.residual_fro <= out.history[-1] + 1e-12


def test_msp_requires_2k_le_m():
    with pytest.raises(InvalidSparsity):
        solve_msp(np.eye(5), np.ones((5, 1)), 3)


def test_mfocuss_zero_data():
    out = solve_mfocuss(np.random.default_rng(0).standard_normal((4, 9)), np.zeros((4, 2)), 3)
    np.testing.assert_array_equal(out.support, [0, 1, 2])
    assert not out.X_hat.any()


@pytest.mark.parametrize("seed", range(5))
def test_mfocuss_matches_exhaustive_oracle(seed, brute_support):
    inst = make_instance(10, 16, 2, 4, seed=seed)
    out = solve_mfocuss(inst.A, inst.B, 2, SolverConfig(focuss_p=0.8))
    np.testing.assert_array_equal(out.support, brute_support(inst.A, inst.B, 2))


def test_mfocuss_diversity_non_increasing():
    inst = make_instance(20, 40, 4, 3, seed=9)
    _, iters, converged, objective = mfocuss_iterates(inst.A, inst.B, LONG)
    assert converged and iters > 2
    obj = np.array(objective[1:])
    assert np.all(np.diff(obj) <= 1e-9 * obj[:-1])


def test_focuss_diversity_value():
    X = np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])
    assert focuss_diversity(X, 0.5) == pytest.approx(math.sqrt(5) + 1)


def test_group_soft_threshold_matches_rowwise_oracle():
    rng = np.random.default_rng(2)
    V = rng.standard_normal((30, 4))
    V[3] = 0.0
    t = 1.1
    out = group_soft_threshold(V, t)
    for r, o in zip(V, out):
        n = math.sqrt(sum(x * x for x in r))
        want = r * max(0.0, 1 - t / n) if n > 0 else r * 0
        np.testing.assert_allclose(o, want, atol=1e-15)


def test_mbpdn_zero_lambda_is_least_squares():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((20, 5))
    B = rng.standard_normal((20, 3))
    X, _, converged, _ = group_lasso_fista(A, B, 0.0, SolverConfig(max_iter=20000, tol=1e-14))
    np.testing.assert_allclose(X, np.linalg.lstsq(A, B, rcond=None)[0], atol=1e-6)


@pytest.mark.parametrize("rule", list(StepRule))
def test_mbpdn_large_lambda_gives_zero(rule):
    inst = make_instance(8, 16, 2, 2, seed=1)
    lam = float(np.max(np.linalg.norm(inst.A.T @ inst.B, axis=1)))
    X, iters, converged, _ = group_lasso_fista(inst.A, inst.B, lam, SolverConfig(bpdn_step_rule=rule))
    assert converged and not X.any()


def test_mbpdn_objective_history_decreases_with_backtracking():
    inst = make_instance(15, 30, 3, 2, "gaussian", 20.0, 6)
    lam = default_bpdn_lambda(inst.A, inst.B)
    _, _, _, hist = group_lasso_fista(inst.A, inst.B, lam, SolverConfig(max_iter=500, bpdn_step_rule="backtracking"))
    assert hist[-1] <= hist[0]
    out = solve_mbpdn(inst.A, inst.B, 3, SolverConfig(max_iter=2000))
    np.testing.assert_array_equal(out.support, inst.support)


def test_oracle_noiseless_and_noisy():
    inst = make_instance(10, 20, 3, 2, seed=2)
    out = solve_oracle(inst.A, inst.B, inst.support, 3)
    assert np.linalg.norm(inst.X - out.X_hat) <= 1e-10 * np.linalg.norm(inst.X)
    noisy = make_instance(10, 20, 3, 2, "gaussian", 10.0, 2)
    out = solve_oracle(noisy.A, noisy.B, noisy.support, 3)
    A_T = noisy.A[:, noisy.support]
    expected_err = np.linalg.pinv(A_T) @ noisy.W
    np.testing.assert_allclose(out.X_hat[noisy.support] - noisy.X[noisy.support], expected_err, atol=1e-12)
    with pytest.raises(InvalidSparsity):
        solve_oracle(inst.A, inst.B, [0, 1], 3)
    with pytest.raises(ValueError):
        run_solver("Oracle", inst.A, inst.B, 3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32), st.sampled_from(ALL + [SolverId.ORACLE]))
def test_output_invariants(seed, sid):
    inst = make_instance(12, 24, 3, 2, "gaussian", 15.0, seed)
    out = run_solver(sid, inst.A, inst.B, 3, LONG, true_support=inst.support)
    assert out.support.size == 3
    mask = np.ones(24, bool)
    mask[out.support] = False
    assert np.all(out.X_hat[mask] == 0.0)
    assert out.residual_fro == pytest.approx(np.linalg.norm(inst.B - inst.A @ out.X_hat))
    assert out.residual_fro <= np.linalg.norm(inst.B) + 1e-12
    again = run_solver(sid, inst.A, inst.B, 3, LONG, true_support=inst.support)
    assert again.X_hat.tobytes() == out.X_hat.tobytes()


def test_strict_nonconvergence():
    inst = make_instance(20, 40, 4, 3, "gaussian", 10.0, 1)
    cfg = SolverConfig(max_iter=2)
    out = run_solver("MFOCUSS", inst.A, inst.B, 4, cfg)
    assert not out.converged
    with pytest.raises(NonConvergence):
        run_solver("MFOCUSS", inst.A, inst.B, 4, cfg, strict=True)


def test_sparsity_bounds():
    with pytest.raises(InvalidSparsity):
        solve_momp(np.eye(3), np.ones((3, 1)), 4)
    with pytest.raises(ValueError):
        solve_momp(np.eye(3), np.ones((2, 1)), 1)

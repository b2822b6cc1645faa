import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_tiny_problem
from usvr import qp
from usvr.kernel import KernelSpec, gram


def svr_problem(X, y, C, eps, kernel=KernelSpec.linear()):
    n = len(y)
    return qp.QpProblem(gram(kernel, np.asarray(X, float)), np.asarray(y, float), np.full(n, eps), np.full(n, C))


def zero_box(n=3):
    return qp.QpProblem(np.eye(n), np.arange(n, dtype=float), np.zeros(n), np.zeros(n))


class TestProblem:
    def test_rejects_shift_outside_box(self):
        with pytest.raises(qp.QpError):
            qp.QpProblem(np.eye(1), [0.0], [0.0], [1.0], shift_alpha=[2.0])

    def test_rejects_both_shifts(self):
        with pytest.raises(qp.QpError):
            qp.QpProblem(np.eye(1), [0.0], [0.0], [1.0], shift_alpha=[1.0], shift_beta=[1.0])

    def test_bounds_follow_shifts(self):
        p = qp.QpProblem(np.eye(1), [0.0], [0.0], [2.0], shift_beta=[2.0])
        np.testing.assert_array_equal(p.alpha_bounds[0], [0])
        np.testing.assert_array_equal(p.alpha_bounds[1], [2])
        np.testing.assert_array_equal(p.beta_bounds[0], [-2])
        np.testing.assert_array_equal(p.beta_bounds[1], [0])

    def test_check_gram_rejects_indefinite(self):
        p = qp.QpProblem(np.array([[0.0, 1.0], [1.0, 0.0]]), [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(qp.IllPosedProblemError):
            p.check_gram()

    def test_check_gram_rejects_asymmetric(self):
        p = qp.QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), [0.0, 0.0], [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(qp.IllPosedProblemError):
            p.check_gram()


class TestSolve:
    def test_single_row_zero(self):
        sol = qp.solve(svr_problem([[1.0]], [3.0], 5.0, 0.5))
        assert sol.alpha[0] == 0 and sol.beta[0] == 0
        assert sol.bias == pytest.approx(3.0)

    def test_zero_box(self):
        sol = qp.solve(zero_box())
        np.testing.assert_array_equal(sol.theta, 0)

    def test_two_point_interpolation(self):
        p = svr_problem([[0.0], [1.0]], [0.0, 1.0], 1000.0, 0.0)
        sol = qp.solve(p, 1e-6)
        theta = sol.theta
        f = gram(KernelSpec.linear(), np.array([[0.0], [0.5], [1.0]]), np.array([[0.0], [1.0]])) @ theta + sol.bias
        np.testing.assert_allclose(f, [0, 0.5, 1], atol=1e-3)
        assert sol.bias == pytest.approx(0.0, abs=1e-3)
        assert sol.objective == pytest.approx(-0.5, abs=1e-6)

    def test_five_tiny_linear_match_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            p = random_tiny_problem(rng, "linear")
            a = qp.solve(p, 1e-8)
            b = qp.reference_solve(p)
            assert abs(a.objective - b.objective) <= 1e-6

    def test_warm_start_same_answer(self, rng):
        p = random_tiny_problem(rng)
        cold = qp.solve(p, 1e-8)
        warm = qp.solve(p, 1e-8, alpha0=cold.alpha, beta0=cold.beta)
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
        assert warm.iterations <= cold.iterations

    def test_iteration_cap(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 3))
        p = svr_problem(X, X @ [1, 2, 3] + rng.normal(size=40), 10.0, 0.1)
        with pytest.raises(qp.NonConvergenceError) as info:
            qp.solve(p, 1e-9, max_iter=3)
        assert info.value.best.iterations > 0

    @given(st.integers(0, 10**6))
    def test_feasible_and_certified(self, seed):
        p = random_tiny_problem(np.random.default_rng(seed))
        sol = qp.solve(p, 1e-4)
        la, ua = p.alpha_bounds
        lb, ub = p.beta_bounds
        assert np.all(sol.alpha >= la) and np.all(sol.alpha <= ua)
        assert np.all(sol.beta >= lb) and np.all(sol.beta <= ub)
        assert abs(sol.alpha.sum() - sol.beta.sum()) <= 1e-9
        assert qp.kkt_violation(p, sol) <= 1e-4


class TestReference:
    def test_zero_box(self):
        sol = qp.reference_solve(zero_box())
        np.testing.assert_array_equal(sol.theta, 0)

    def test_two_point(self):
        p = svr_problem([[0.0], [1.0]], [0.0, 1.0], 1000.0, 0.0)
        sol = qp.reference_solve(p)
        f = np.array([0.0, 1.0]) * (sol.theta @ np.array([0.0, 1.0])) + sol.bias
        np.testing.assert_allclose(f, [0, 1], atol=1e-3)

    def test_projection_feasible(self, rng):
        for _ in range(20):
            k = 8
            lo = -rng.uniform(0, 2, k)
            hi = rng.uniform(0, 2, k)
            s = rng.choice([-1.0, 1.0], k)
            z = qp._project(rng.normal(scale=3, size=k), s, lo, hi)
            assert np.all(z >= lo - 1e-12) and np.all(z <= hi + 1e-12)
            assert abs(s @ z) <= 1e-9


class TestBias:
    def test_all_zero_midpoint(self):
        p = svr_problem([[1.0]], [3.0], 1.0, 1.0)
        assert qp.compute_bias(p, np.zeros(1), np.zeros(1)) == pytest.approx(3.0)

    def test_free_vectors_agree(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(12, 2))
        p = svr_problem(X, X @ [1.0, -1.0] + 0.3 * rng.normal(size=12), 2.0, 0.1)
        tol = 1e-6
        sol = qp.solve(p, tol)
        F = p.gram @ sol.theta
        la, ua = p.alpha_bounds
        lb, ub = p.beta_bounds
        cands = [p.y[i] - F[i] - p.rho[i] for i in range(12) if la[i] < sol.alpha[i] < ua[i]]
        cands += [p.y[i] - F[i] + p.rho[i] for i in range(12) if lb[i] < sol.beta[i] < ub[i]]
        assert cands
        assert max(cands) - min(cands) < tol
        assert all(abs(c - sol.bias) < tol for c in cands)


class TestKkt:
    def test_zero_box_optimum(self):
        p = zero_box()
        assert qp.kkt_violation(p, np.zeros(3), np.zeros(3)) == 0

    def test_perturbed(self):
        p = svr_problem([[0.0], [1.0], [2.0]], [0.0, 1.2, 1.9], 10.0, 0.05)
        sol = qp.solve(p, 1e-8)
        a = sol.alpha.copy()
        k = int(np.argmax(a))
        a[k] -= 0.1
        assert qp.kkt_violation(p, a, sol.beta) > 1e-3 > qp.kkt_violation(p, sol)

    def test_solution_within_tol(self, rng):
        for tol in (1e-2, 1e-3, 1e-5):
            p = random_tiny_problem(rng)
            assert qp.kkt_violation(p, qp.solve(p, tol)) <= tol

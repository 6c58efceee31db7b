import numpy as np
import pytest
from scipy.optimize import linprog

from prw.exact_ot import brute_force_ot, exact_ot_plan, exact_ot_solve


def linprog_oracle(cost, r, c):
    """Dense-LP reference for rectangular/non-uniform instances."""
    m, n = cost.shape
    A_eq = []
    for i in range(m):
        row = np.zeros((m, n))
        row[i, :] = 1.0
        A_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((m, n))
        col[:, j] = 1.0
        A_eq.append(col.ravel())
    res = linprog(
        cost.ravel(),
        A_eq=np.array(A_eq),
        b_eq=np.concatenate([r, c]),
        bounds=(0, None),
        method="highs",
    )
    assert res.success
    return res.fun


class TestExamples:
    def test_zero_cost_matching(self):
        half = np.array([0.5, 0.5])
        sol = exact_ot_solve(np.array([[0.0, 1.0], [1.0, 0.0]]), half, half)
        assert sol.value == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(sol.plan.matrix, [[0.5, 0.0], [0.0, 0.5]])

    def test_tied_permutations(self):
        half = np.array([0.5, 0.5])
        sol = exact_ot_solve(np.array([[1.0, 2.0], [3.0, 4.0]]), half, half)
        assert sol.value == pytest.approx(2.5)

    def test_singleton(self):
        one = np.array([1.0])
        sol = exact_ot_solve(np.array([[7.0]]), one, one)
        assert np.allclose(sol.plan.matrix, [[1.0]])
        assert sol.value == pytest.approx(7.0)


class TestBruteForce:
    def test_zero_cost(self):
        half = np.array([0.5, 0.5])
        assert brute_force_ot(np.array([[0.0, 1.0], [1.0, 0.0]]), half, half) == 0.0

    def test_constant_cost(self):
        r = np.full(3, 1 / 3)
        assert brute_force_ot(np.full((3, 3), 4.2), r, r) == pytest.approx(4.2)

    def test_integer_cross_check(self):
        rng = np.random.default_rng(0)
        r = np.full(4, 0.25)
        cost = rng.integers(0, 10, size=(4, 4)).astype(float)
        assert brute_force_ot(cost, r, r) == pytest.approx(
            exact_ot_solve(cost, r, r).value, abs=1e-12
        )

    def test_size_limit(self):
        r = np.full(8, 1 / 8)
        with pytest.raises(ValueError):
            brute_force_ot(np.zeros((8, 8)), r, r)

    def test_non_uniform_rejected(self):
        with pytest.raises(ValueError):
            brute_force_ot(np.zeros((2, 2)), np.array([0.9, 0.1]), np.array([0.5, 0.5]))


class TestOracleEquivalence:
    def test_random_uniform_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            n = int(rng.integers(2, 7))
            r = np.full(n, 1 / n)
            cost = rng.random((n, n))
            sol = exact_ot_solve(cost, r, r)
            assert sol.value == pytest.approx(brute_force_ot(cost, r, r), abs=1e-9)

    def test_dual_certificate(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            m = int(rng.integers(2, 8))
            n = int(rng.integers(2, 8))
            r = rng.random(m) + 0.1
            r /= r.sum()
            c = rng.random(n) + 0.1
            c /= c.sum()
            cost = rng.random((m, n))
            sol = exact_ot_solve(cost, r, c)
            phi, psi = sol.dual_row, sol.dual_col
            assert np.all(phi[:, None] + psi[None, :] <= cost + 1e-9)
            assert phi @ r + psi @ c == pytest.approx(sol.value, abs=1e-9)

    def test_rectangular_against_linprog(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            m, n = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            r = rng.random(m) + 0.1
            r /= r.sum()
            c = rng.random(n) + 0.1
            c /= c.sum()
            cost = rng.random((m, n))
            sol = exact_ot_solve(cost, r, c)
            assert sol.value == pytest.approx(linprog_oracle(cost, r, c), abs=1e-9)


class TestInvariants:
    def test_transposition_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            cost = rng.random((4, 5))
            r = rng.random(4) + 0.1
            r /= r.sum()
            c = rng.random(5) + 0.1
            c /= c.sum()
            assert exact_ot_solve(cost, r, c).value == pytest.approx(
                exact_ot_solve(cost.T, c, r).value, abs=1e-10
            )

    def test_exact_marginals(self):
        rng = np.random.default_rng(5)
        cost = rng.random((6, 6))
        r = rng.random(6) + 0.1
        r /= r.sum()
        c = rng.random(6) + 0.1
        c /= c.sum()
        sol = exact_ot_solve(cost, r, c)
        assert np.abs(sol.plan.matrix.sum(1) - r).max() <= 1e-12
        assert np.abs(sol.plan.matrix.sum(0) - c).max() <= 1e-12

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        cost = rng.random((8, 8))
        r = np.full(8, 1 / 8)
        a = exact_ot_solve(cost, r, r)
        b = exact_ot_solve(cost, r, r)
        assert np.array_equal(a.plan.matrix, b.plan.matrix)
        assert a.iterations == b.iterations

    def test_degenerate_weights(self):
        # many tied zero allocations exercise the anti-cycling fallback
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = 5
            cost = rng.integers(0, 3, size=(n, n)).astype(float)
            r = np.full(n, 1 / n)
            sol = exact_ot_solve(cost, r, r)
            assert sol.value == pytest.approx(brute_force_ot(cost, r, r), abs=1e-9)


class TestWarmBasis:
    def test_warm_start_agrees_and_saves_pivots(self):
        rng = np.random.default_rng(8)
        n = 30
        r = np.full(n, 1 / n)
        cost = rng.random((n, n))
        cold = exact_ot_solve(cost, r, r)
        nearby = cost + 0.01 * rng.random((n, n))
        recold = exact_ot_solve(nearby, r, r)
        warm = exact_ot_solve(nearby, r, r, warm_basis=cold.basis)
        assert warm.value == pytest.approx(recold.value, abs=1e-10)
        assert warm.iterations <= recold.iterations

    def test_bogus_warm_basis_falls_back(self):
        rng = np.random.default_rng(9)
        n = 4
        r = np.full(n, 1 / n)
        cost = rng.random((n, n))
        bad = tuple((i, i) for i in range(n))
        sol = exact_ot_solve(cost, r, r, warm_basis=bad)
        assert sol.value == pytest.approx(brute_force_ot(cost, r, r), abs=1e-9)


class TestFastPlanPath:
    def test_uniform_square_matches_simplex(self):
        rng = np.random.default_rng(10)
        for n in (5, 12, 40):
            cost = rng.random((n, n))
            r = np.full(n, 1 / n)
            plan, value = exact_ot_plan(cost, r, r)
            assert value == pytest.approx(exact_ot_solve(cost, r, r).value, abs=1e-12)
            assert np.abs(plan.matrix.sum(1) - r).max() <= 1e-15

    def test_general_weights_delegate_to_simplex(self):
        rng = np.random.default_rng(11)
        cost = rng.random((3, 5))
        r = np.array([0.5, 0.3, 0.2])
        c = np.full(5, 0.2)
        plan, value = exact_ot_plan(cost, r, c)
        assert value == pytest.approx(linprog_oracle(cost, r, c), abs=1e-9)
        assert np.abs(plan.matrix.sum(1) - r).max() <= 1e-12

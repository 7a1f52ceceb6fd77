import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.solver.errors import InvariantViolationError
from src.solver.models import SubproblemInput
from src.solver.regularizer import compute_weights
from src.solver.subproblem import (
    kkt_tolerance, solve_weighted_svt, subproblem_kkt_residual, surrogate_objective,
)
from src.solver.svd import svd_ordered


def grid_oracle(big_sigma, weights, t, points=20001):
    """Per singular value minimum of 1/2 (x - Sigma_i)^2 + t w_i x over a dense grid."""
    total = 0.0
    for s, w in zip(big_sigma, weights):
        grid = np.linspace(0.0, s + 1.0, points)
        total += float(np.min(0.5 * (grid - s) ** 2 + t * w * grid))
    return total


class TestWeightedSvt(unittest.TestCase):
    def test_no_shrinkage(self):
        rng = np.random.default_rng(0)
        step = rng.standard_normal((3, 4))
        inp = SubproblemInput(step_matrix=step, weights=np.array([0.1, 0.2, 0.3]), threshold_scale=0.0)
        sol = solve_weighted_svt(inp)
        assert_allclose(sol.x, step, atol=1e-12)
        self.assertLess(subproblem_kkt_residual(sol.x, inp, beta=1.1, lam=0.0, solution=sol), 1e-12)

    def test_diagonal_example(self):
        inp = SubproblemInput(step_matrix=np.diag([5.0, 1.0]), weights=np.array([0.2, 0.2]), threshold_scale=10.0)
        sol = solve_weighted_svt(inp)
        assert_allclose(sol.svd.s, [3.0, 0.0])
        assert_allclose(sol.x, np.diag([3.0, 0.0]), atol=1e-12)
        # lambda / (2 beta) = 10
        self.assertLess(subproblem_kkt_residual(sol.x, inp, beta=1.1, lam=22.0, solution=sol), 1e-12)
        self.assertLess(subproblem_kkt_residual(sol.x, inp, beta=1.1, lam=22.0), 1e-12)

    def test_matches_grid_oracle_and_kkt(self):
        rng = np.random.default_rng(42)
        beta = 1.1
        for trial in range(100):
            size = 3 if trial % 2 == 0 else 4
            p = (0.3, 0.5, 0.7)[trial % 3]
            step = rng.standard_normal((size, size)) * 3
            sigma_x = np.sort(rng.random(size) * 4)[::-1]
            weights = compute_weights(sigma_x, np.full(size, 0.5), p)
            t = rng.uniform(0.1, 2.0)
            inp = SubproblemInput(step_matrix=step, weights=weights, threshold_scale=t)
            sol = solve_weighted_svt(inp)

            value = surrogate_objective(sol.x, inp, sol.svd.s)
            oracle = grid_oracle(svd_ordered(step).s, weights, t)
            self.assertLessEqual(value, oracle + 1e-6)
            self.assertLessEqual(subproblem_kkt_residual(sol.x, inp, beta, 2 * beta * t, sol), 1e-8)

    def test_beats_random_candidates(self):
        rng = np.random.default_rng(3)
        step = rng.standard_normal((4, 4))
        weights = compute_weights(np.array([3.0, 2.0, 1.0, 0.5]), np.full(4, 0.1), 0.5)
        inp = SubproblemInput(step_matrix=step, weights=weights, threshold_scale=0.4)
        sol = solve_weighted_svt(inp)
        best = surrogate_objective(sol.x, inp, sol.svd.s)
        for _ in range(10000):
            candidate = sol.x + rng.standard_normal((4, 4)) * rng.choice([1e-3, 1e-1, 1.0])
            self.assertLessEqual(best, surrogate_objective(candidate, inp) + 1e-12)

    def test_shares_singular_vectors(self):
        rng = np.random.default_rng(5)
        step = rng.standard_normal((3, 5))
        inp = SubproblemInput(step_matrix=step, weights=np.array([0.1, 0.2, 0.4]), threshold_scale=1.0)
        sol = solve_weighted_svt(inp)
        ref = svd_ordered(step)
        assert_allclose(sol.step_sigma, ref.s)
        assert_allclose(sol.svd.s, np.maximum(ref.s - np.array([0.1, 0.2, 0.4]), 0.0))

    def test_rejects_descending_weights(self):
        inp = SubproblemInput(step_matrix=np.eye(2), weights=np.array([0.5, 0.1]), threshold_scale=1.0)
        with self.assertRaises(InvariantViolationError):
            solve_weighted_svt(inp)

    def test_rejects_nonpositive_weights(self):
        inp = SubproblemInput(step_matrix=np.eye(2), weights=np.array([0.0, 0.1]), threshold_scale=1.0)
        with self.assertRaises(InvariantViolationError):
            solve_weighted_svt(inp)

    def test_rejects_wrong_weight_count(self):
        inp = SubproblemInput(step_matrix=np.eye(3), weights=np.array([0.1, 0.2]), threshold_scale=1.0)
        with self.assertRaises(InvariantViolationError):
            solve_weighted_svt(inp)

    def test_kkt_tolerance_scales_with_step(self):
        small = SubproblemInput(step_matrix=np.eye(2) * 1e-3, weights=np.ones(2), threshold_scale=1.0)
        large = SubproblemInput(step_matrix=np.eye(2) * 1e3, weights=np.ones(2), threshold_scale=1.0)
        self.assertEqual(kkt_tolerance(small), 1e-8)
        self.assertAlmostEqual(kkt_tolerance(large), 1e-8 * np.sqrt(2) * 1e3)


if __name__ == "__main__":
    unittest.main()

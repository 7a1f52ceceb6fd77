import unittest

import numpy as np
from numpy.testing import assert_allclose

from src.solver.errors import InvariantViolationError, NumericalError
from src.solver.loss import loss_value
from src.solver.models import ProblemInstance
from src.solver.regularizer import (
    compute_weights, merit_H, schatten_penalty, smoothed_penalty, weights_ascending,
)
from src.solver.svd import svd_ordered


class TestPenalties(unittest.TestCase):
    def test_smoothed_penalty(self):
        self.assertAlmostEqual(smoothed_penalty(np.zeros(2), np.ones(2), 1.0, 0.5), 2.0)
        self.assertAlmostEqual(smoothed_penalty(np.array([3.0, 0.0]), np.ones(2), 2.0, 0.5), 6.0)

    def test_smoothed_penalty_matches_sum(self):
        rng = np.random.default_rng(0)
        sigma = np.sort(rng.random(6))[::-1]
        eps = rng.random(6) + 0.01
        expected = 0.7 * sum((s + e) ** 0.3 for s, e in zip(sigma, eps))
        self.assertAlmostEqual(smoothed_penalty(sigma, eps, 0.7, 0.3), expected, places=12)

    def test_smoothed_penalty_rejects_nonpositive_eps(self):
        with self.assertRaises(InvariantViolationError):
            smoothed_penalty(np.ones(2), np.array([1.0, 0.0]), 1.0, 0.5)

    def test_schatten_penalty(self):
        self.assertAlmostEqual(schatten_penalty(np.array([4.0, 1.0, 0.0]), 2.0, 0.5), 6.0)


class TestWeights(unittest.TestCase):
    def test_scalar_cases(self):
        assert_allclose(compute_weights(np.zeros(1), np.ones(1), 0.5), [0.5])
        assert_allclose(compute_weights(np.array([3.0]), np.ones(1), 0.5), [0.25])

    def test_ascending_for_sorted_spectrum(self):
        sigma = np.array([3.0, 1.0, 0.0])
        eps = np.array([0.1, 0.05, 0.02])
        w = compute_weights(sigma, eps, 0.5)
        assert_allclose(w, [0.5 * (s + e) ** -0.5 for s, e in zip(sigma, eps)], rtol=1e-14)
        self.assertTrue(weights_ascending(w))

    def test_detects_unordered(self):
        self.assertFalse(weights_ascending(np.array([0.3, 0.2])))

    def test_rejects_nonpositive_base(self):
        with self.assertRaises(InvariantViolationError):
            compute_weights(np.zeros(2), np.array([1.0, 0.0]), 0.5)

    def test_overflow(self):
        with self.assertRaises(NumericalError):
            compute_weights(np.zeros(1), np.array([1e-320]), 0.01)

    def test_shape_mismatch(self):
        with self.assertRaises(InvariantViolationError):
            compute_weights(np.zeros(2), np.ones(3), 0.5)


class TestMerit(unittest.TestCase):
    def test_no_proximal_term(self):
        rng = np.random.default_rng(1)
        keep = rng.random((4, 4)) < 0.6
        inst = ProblemInstance.from_observation(np.where(keep, 1.0, 0.0), keep, 0.5, 0.5)
        x = rng.standard_normal((4, 4))
        s = svd_ordered(x).s
        eps = np.full(4, 0.3)
        expected = loss_value(inst, x) + smoothed_penalty(s, eps, 0.5, 0.5)
        self.assertAlmostEqual(merit_H(inst, x, x, s, eps, 1.1), expected, places=12)

    def test_all_zero_problem(self):
        inst = ProblemInstance.from_observation(np.zeros((3, 3)), [], 2.0, 0.5)
        eps = np.array([4.0, 1.0, 0.25])
        h = merit_H(inst, np.zeros((3, 3)), np.zeros((3, 3)), np.zeros(3), eps, 1.1)
        self.assertAlmostEqual(h, 2.0 * (2.0 + 1.0 + 0.5))

    def test_composition(self):
        rng = np.random.default_rng(2)
        inst = ProblemInstance.from_observation(np.zeros((3, 4)), [(0, 0), (2, 3)], 0.2, 0.4)
        x, x_prev = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        s = svd_ordered(x).s
        eps = np.array([0.5, 0.5, 0.1])
        expected = (loss_value(inst, x) + 0.55 * np.linalg.norm(x - x_prev) ** 2
                    + 0.2 * np.sum((s + eps) ** 0.4))
        self.assertAlmostEqual(merit_H(inst, x, x_prev, s, eps, 1.1), expected, places=12)


if __name__ == "__main__":
    unittest.main()

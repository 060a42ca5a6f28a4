import math

import numpy as np
from django.test import SimpleTestCase

from dgda import autodiff as ad
from dgda.exceptions import ContractViolation
from dgda.robust import (
    EmaTracker,
    cls_loss,
    cross_entropy,
    fixed_point_residual,
    stationary_probability,
    update_ema,
)

from .helpers import FD_TOLERANCE, gradient_error


def random_distributions(rng, n, k):
    raw = rng.uniform(0.05, 1.0, size=(n, k))
    return raw / raw.sum(axis=1, keepdims=True)


class EmaTrackerTests(SimpleTestCase):
    def test_first_observation_is_copied(self):
        tracker = EmaTracker(3, 2, momentum=0.7)
        update_ema(tracker, [1], [[0.2, 0.8]])
        rows, mask = tracker.rows([0, 1])
        np.testing.assert_array_equal(rows, [[0.0, 0.0], [0.2, 0.8]])
        np.testing.assert_array_equal(mask, [False, True])

    def test_blend_with_momentum(self):
        tracker = EmaTracker(1, 2, momentum=0.7)
        update_ema(tracker, [0], [[1.0, 0.0]])
        update_ema(tracker, [0], [[0.0, 1.0]])
        np.testing.assert_allclose(tracker.table[0], [0.7, 0.3])

    def test_constant_predictions_are_a_fixed_point(self):
        tracker = EmaTracker(2, 3, momentum=0.9)
        update_ema(tracker, [0, 1], [[1 / 3] * 3, [1 / 3] * 3])
        for _ in range(50):
            update_ema(tracker, [0], [[0.6, 0.3, 0.1]])
        np.testing.assert_allclose(tracker.table[0], [0.6, 0.3, 0.1], atol=1e-2)
        np.testing.assert_allclose(tracker.table[1], [1 / 3] * 3)

    def test_frozen_tracker_ignores_updates(self):
        tracker = EmaTracker(1, 2)
        update_ema(tracker, [0], [[0.5, 0.5]])
        tracker.frozen = True
        update_ema(tracker, [0], [[1.0, 0.0]])
        np.testing.assert_array_equal(tracker.table[0], [0.5, 0.5])

    def test_rows_are_copies(self):
        tracker = EmaTracker(1, 2)
        rows, _ = tracker.rows([0])
        rows[0, 0] = 9.0
        self.assertEqual(tracker.table[0, 0], 0.0)

    def test_invalid_updates(self):
        tracker = EmaTracker(2, 2)
        with self.assertRaises(ContractViolation):
            update_ema(tracker, [0], [[0.5, 0.6]])
        with self.assertRaises(ContractViolation):
            update_ema(tracker, [0, 1], [[0.5, 0.5]])
        with self.assertRaises(ContractViolation):
            EmaTracker(2, 2, momentum=1.0)


class ClassificationLossTests(SimpleTestCase):
    def test_zero_lambda_is_cross_entropy(self):
        rng = np.random.default_rng(0)
        probs = ad.Tensor(random_distributions(rng, 4, 3))
        labels = [0, 2, 1, 1]
        ema = random_distributions(rng, 4, 3)
        self.assertEqual(cls_loss(probs, labels, ema, lam=0.0).item(), cross_entropy(probs, labels).item())

    def test_uniform_prediction_against_one_hot_history(self):
        loss = cls_loss(ad.Tensor([[0.5, 0.5]]), [0], [[1.0, 0.0]], lam=0.7).item()
        self.assertAlmostEqual(loss, math.log(2) + 0.7 * math.log(0.5), places=12)

    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(1)
        probs = random_distributions(rng, 5, 4)
        ema = random_distributions(rng, 5, 4)
        labels = np.array([0, 3, 1, 2, 3])
        expected = -np.mean(np.log(probs[np.arange(5), labels])) \
            + 0.7 * np.mean(np.log(1.0 - (probs * ema).sum(axis=1)))
        self.assertAlmostEqual(cls_loss(ad.Tensor(probs), labels, ema, lam=0.7).item(), expected, places=12)

    def test_regulariser_never_increases_the_loss(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            probs = ad.Tensor(random_distributions(rng, 3, 3))
            labels = rng.integers(3, size=3)
            ema = random_distributions(rng, 3, 3)
            self.assertLessEqual(cls_loss(probs, labels, ema, lam=0.7).item(), cross_entropy(probs, labels).item())

    def test_uninitialised_rows_are_skipped(self):
        probs = ad.Tensor([[0.5, 0.5], [0.5, 0.5]])
        ema = [[1.0, 0.0], [1.0, 0.0]]
        loss = cls_loss(probs, [0, 0], ema, lam=1.0, ema_mask=[True, False]).item()
        self.assertAlmostEqual(loss, math.log(2) + math.log(0.5) / 2, places=12)

    def test_label_out_of_range(self):
        with self.assertRaises(ContractViolation):
            cls_loss(ad.Tensor([[0.5, 0.5]]), [2], [[1.0, 0.0]])
        with self.assertRaises(ContractViolation):
            cls_loss(ad.Tensor([[0.5, 0.5]]), [0], [[1.0, 0.0], [1.0, 0.0]])

    def test_gradients_through_softmax(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            logits = ad.Parameter(rng.normal(size=(3, 4)), "logits")
            labels = rng.integers(4, size=3)
            ema = random_distributions(rng, 3, 4)
            error = gradient_error(lambda: cls_loss(ad.softmax(logits), labels, ema, lam=0.7), [logits])
            self.assertLess(error, FD_TOLERANCE, f"seed {seed}")


class FixedPointTests(SimpleTestCase):
    def test_no_penalty_has_its_fixed_point_at_one(self):
        self.assertEqual(fixed_point_residual(1.0, 1.0, 1.0, 0.0), 0.0)

    def test_unit_penalty_has_its_fixed_point_at_one(self):
        self.assertEqual(fixed_point_residual(1.0, 1.0, 1.0, 1.0), 0.0)

    def test_residual_away_from_the_fixed_point(self):
        self.assertAlmostEqual(fixed_point_residual(0.5, 1.0, 1.0, 1.0), 1 / 6, places=12)

    def test_invalid_arguments(self):
        with self.assertRaises(ContractViolation):
            fixed_point_residual(0.0, 1.0, 1.0, 0.5)
        with self.assertRaises(ContractViolation):
            fixed_point_residual(0.5, 0.0, 0.0, 0.5)

    def test_minimiser_is_stationary(self):
        for lam in (0.3, 0.7):
            p = stationary_probability(lam)
            self.assertGreater(p, 0.5)
            self.assertLess(fixed_point_residual(p, 1.0, 1.0, lam), 1e-3)

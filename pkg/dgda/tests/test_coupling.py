import math
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase

from dgda import autodiff as ad
from dgda.coupling import (
    CouplingOptimizers,
    alternate_branch_update,
    coupling_loss,
    elbo_surrogate,
    generate_pseudo_labels,
    kl_categorical,
)
from dgda.exceptions import ContractViolation
from dgda.layers import Linear
from dgda.model import DgdaModel
from dgda.robust import PROB_FLOOR, cross_entropy

from .helpers import changed_names, snapshot_values, tiny_config, tiny_mixed_batch


class PseudoLabelTests(SimpleTestCase):
    def setUp(self):
        self.probs = np.array([[0.9, 0.1], [0.4, 0.6], [0.5, 0.5]])

    def test_keeps_rows_above_threshold(self):
        pseudo = generate_pseudo_labels(self.probs, 0.55)
        np.testing.assert_array_equal(pseudo.indices, [0, 1])
        np.testing.assert_array_equal(pseudo.labels, [0, 1])
        np.testing.assert_allclose(pseudo.confidences, [0.9, 0.6])

    def test_threshold_is_strict(self):
        self.assertNotIn(2, generate_pseudo_labels(self.probs, 0.5).indices)
        self.assertEqual(len(generate_pseudo_labels(self.probs, 0.9)), 0)

    def test_ties_pick_the_lowest_class(self):
        pseudo = generate_pseudo_labels(self.probs, 0.3)
        self.assertEqual(pseudo.labels[2], 0)

    def test_raising_the_threshold_only_drops_rows(self):
        rng = np.random.default_rng(0)
        raw = rng.uniform(size=(30, 4))
        probs = raw / raw.sum(axis=1, keepdims=True)
        previous = set(range(30))
        for zeta in np.linspace(0.0, 1.0, 11):
            kept = set(generate_pseudo_labels(probs, zeta).indices.tolist())
            self.assertLessEqual(kept, previous)
            previous = kept

    def test_rows_must_be_distributions(self):
        with self.assertRaises(ContractViolation):
            generate_pseudo_labels(np.array([[0.9, 0.9]]), 0.5)


class KlTests(SimpleTestCase):
    def test_identical_distributions(self):
        self.assertAlmostEqual(kl_categorical([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]), 0.0, places=14)

    def test_one_hot_against_uniform(self):
        self.assertAlmostEqual(kl_categorical([1.0, 0.0], [0.5, 0.5]), math.log(2), places=14)

    def test_zero_student_mass_is_floored(self):
        expected = 0.5 * math.log(0.5) + 0.5 * (math.log(0.5) - math.log(PROB_FLOOR))
        self.assertAlmostEqual(kl_categorical([0.5, 0.5], [1.0, 0.0]), expected, places=10)

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            kl_categorical([0.5, 0.5], [1.0, 0.0, 0.0])


class CouplingLossTests(SimpleTestCase):
    def setUp(self):
        self.student_src = ad.Tensor([[0.8, 0.2]])
        self.student_tgt = ad.Tensor([[0.6, 0.4]])

    def test_unreachable_threshold_leaves_cross_entropy(self):
        loss = coupling_loss(self.student_src, [0], self.student_tgt, np.array([[0.9, 0.1]]), zeta=1.0)
        self.assertEqual(loss.item(), cross_entropy(self.student_src, [0]).item())

    def test_single_row_oracle(self):
        loss = coupling_loss(self.student_src, [0], self.student_tgt, np.array([[0.9, 0.1]]), zeta=0.5)
        expected = -math.log(0.8) + kl_categorical([0.9, 0.1], [0.6, 0.4])
        self.assertAlmostEqual(loss.item(), expected, places=12)

    def test_hard_labels_use_one_hot_rows(self):
        loss = coupling_loss(self.student_src, [0], self.student_tgt, np.array([[0.9, 0.1]]), zeta=0.5, hard=True)
        self.assertAlmostEqual(loss.item(), -math.log(0.8) - math.log(0.6), places=12)

    def test_never_below_cross_entropy(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            raw = rng.uniform(0.05, 1, size=(6, 3))
            probs = raw / raw.sum(axis=1, keepdims=True)
            src, tgt, teacher = ad.Tensor(probs[:2]), ad.Tensor(probs[2:4]), probs[4:]
            labels = rng.integers(3, size=2)
            self.assertGreaterEqual(coupling_loss(src, labels, tgt, teacher, zeta=0.3).item(),
                                    cross_entropy(src, labels).item() - 1e-12)

    def test_teacher_must_be_detached(self):
        teacher = ad.Parameter(np.array([[0.9, 0.1]]), "teacher")
        with self.assertRaises(ContractViolation):
            coupling_loss(self.student_src, [0], self.student_tgt, teacher, zeta=0.5)

    def test_teacher_and_student_rows_align(self):
        with self.assertRaises(ContractViolation):
            coupling_loss(self.student_src, [0], self.student_tgt, np.array([[0.9, 0.1], [0.5, 0.5]]), zeta=0.5)


class ElboTests(SimpleTestCase):
    def test_decomposes_into_kl_and_source_likelihood(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            raw = rng.uniform(0.05, 1, size=(2, 3, 4))
            q, p = raw / raw.sum(axis=2, keepdims=True)
            log_likelihood = float(rng.uniform(-3, 0))
            expected = -np.mean([kl_categorical(a, b) for a, b in zip(q, p)]) + log_likelihood
            self.assertAlmostEqual(elbo_surrogate(q, p, log_likelihood), expected, places=12)

    def test_matching_distributions_leave_the_source_term(self):
        self.assertAlmostEqual(elbo_surrogate([0.3, 0.7], [0.3, 0.7], -0.25), -0.25, places=14)


class AlternateBranchUpdateTests(SimpleTestCase):
    def setUp(self):
        self.batch, dims, num_classes = tiny_mixed_batch()
        self.model = DgdaModel(tiny_config(), dims, num_classes)

    def optimizers(self, hgnn_lr=0.01, pathnn_lr=0.01):
        return CouplingOptimizers(
            hgnn=ad.Adam(self.model.coupling_parameters("hgnn"), hgnn_lr),
            pathnn=ad.Adam(self.model.coupling_parameters("pathnn"), pathnn_lr),
        )

    def test_zero_learning_rate_changes_nothing(self):
        before = snapshot_values(self.model.parameters())
        losses = alternate_branch_update(self.batch, self.model, self.optimizers(0.0, 0.0), zeta=0.3)
        self.assertEqual(changed_names(before, self.model.parameters()), set())
        self.assertGreater(losses.total, 0.0)

    def test_only_branches_and_their_heads_move(self):
        before = snapshot_values(self.model.parameters())
        alternate_branch_update(self.batch, self.model, self.optimizers(), zeta=0.3)
        changed = changed_names(before, self.model.parameters())
        allowed = {p.name for b in ("hgnn", "pathnn") for p in self.model.coupling_parameters(b)}
        self.assertTrue(changed)
        self.assertLessEqual(changed, allowed)

    def test_teacher_stays_frozen_during_the_student_step(self):
        before = snapshot_values(self.model.coupling_parameters("hgnn"))
        alternate_branch_update(self.batch, self.model, self.optimizers(hgnn_lr=0.0), zeta=0.0)
        self.assertEqual(changed_names(before, self.model.coupling_parameters("hgnn")), set())


class ToyBranchModel:
    """Two softmax-linear 'branches' on fixed 2-D features."""

    def __init__(self, rng):
        self.hgnn = Linear("toy.hgnn", 2, 2, rng)
        self.pathnn = Linear("toy.pathnn", 2, 2, rng)
        self.pathnn.weight.assign(-self.hgnn.weight.data)
        self.pathnn.bias.assign(-self.hgnn.bias.data)

    def branch_probabilities(self, features, branch):
        return ad.softmax(getattr(self, branch)(ad.Tensor(features)))

    def agreement(self, features):
        with ad.no_grad():
            hgnn = self.branch_probabilities(features, "hgnn").data.argmax(axis=1)
            pathnn = self.branch_probabilities(features, "pathnn").data.argmax(axis=1)
        return float(np.mean(hgnn == pathnn))


class CouplingConvergenceTests(SimpleTestCase):
    def test_branches_come_to_agree(self):
        rng = np.random.default_rng(3)
        source = rng.normal(size=(40, 2))
        target = rng.normal(loc=0.3, size=(40, 2))
        batch = SimpleNamespace(source=source, target=target, source_labels=(source[:, 0] > 0).astype(int))
        model = ToyBranchModel(rng)
        optimizers = CouplingOptimizers(hgnn=ad.Adam(model.hgnn.parameters(), 0.05),
                                        pathnn=ad.Adam(model.pathnn.parameters(), 0.05))
        initial = model.agreement(target)
        for _ in range(200):
            alternate_branch_update(batch, model, optimizers, zeta=0.0)
        self.assertGreater(model.agreement(target), initial)
        self.assertGreater(model.agreement(target), 0.8)

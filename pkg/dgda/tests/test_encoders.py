import numpy as np
from django.test import SimpleTestCase

from dgda import autodiff as ad
from dgda.encoders import GRUCell, ModalityEncoder, TextEncoder, encode_audio_visual
from dgda.exceptions import ContractViolation
from dgda.layers import Linear

from .helpers import FD_TOLERANCE, gradient_error, sigmoid, weighted_sum, zero_parameters


def gru_step(cell: GRUCell, x, h):
    """One GRU step written out with numpy."""
    def affine(layer, v):
        out = v @ layer.weight.data
        return out + layer.bias.data if layer.bias is not None else out

    z = sigmoid(affine(cell.update_in, x) + affine(cell.update_hidden, h))
    r = sigmoid(affine(cell.reset_in, x) + affine(cell.reset_hidden, h))
    candidate = np.tanh(affine(cell.candidate_in, x) + affine(cell.candidate_hidden, r * h))
    return (1 - z) * h + z * candidate


class TextEncoderTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_zero_dynamics_give_projection_bias(self):
        encoder = TextEncoder(3, 2, 4, self.rng)
        zero_parameters(encoder)
        bias = np.array([0.1, -0.2, 0.3, 0.4])
        encoder.proj.bias.assign(bias)
        out = encoder.encode(self.rng.normal(size=(5, 3))).data
        np.testing.assert_array_equal(out, np.tile(bias, (5, 1)))

    def test_single_step_directions_coincide_for_identical_cells(self):
        encoder = TextEncoder(3, 2, 2, self.rng)
        for fwd, bwd in zip(encoder.forward_cell.parameters(), encoder.backward_cell.parameters()):
            bwd.assign(fwd.data)
        # projection [I; -I] subtracts the backward state from the forward state
        encoder.proj.weight.assign(np.vstack([np.eye(2), -np.eye(2)]))
        encoder.proj.bias.assign(np.zeros(2))
        out = encoder.encode(self.rng.normal(size=(1, 3))).data
        np.testing.assert_array_equal(out, np.zeros((1, 2)))

    def test_two_steps_match_unrolled_recurrence(self):
        encoder = TextEncoder(3, 2, 4, self.rng)
        x = self.rng.normal(size=(2, 3))
        h0 = np.zeros(2)
        f1 = gru_step(encoder.forward_cell, x[0], h0)
        f2 = gru_step(encoder.forward_cell, x[1], f1)
        b2 = gru_step(encoder.backward_cell, x[1], h0)
        b1 = gru_step(encoder.backward_cell, x[0], b2)
        hidden = np.array([np.concatenate([f1, b1]), np.concatenate([f2, b2])])
        expected = hidden @ encoder.proj.weight.data + encoder.proj.bias.data
        self.assertLess(np.max(np.abs(encoder.encode(x).data - expected)), 1e-10)

    def test_recurrence_stays_inside_each_dialogue(self):
        encoder = TextEncoder(3, 2, 4, self.rng)
        first, second = self.rng.normal(size=(2, 3)), self.rng.normal(size=(4, 3))
        batched = encoder.encode_batch(np.vstack([first, second]), [2, 4]).data
        separate = np.vstack([encoder.encode(first).data, encoder.encode(second).data])
        np.testing.assert_allclose(batched, separate, atol=1e-12)

    def test_empty_sequence(self):
        encoder = TextEncoder(3, 2, 4, self.rng)
        with self.assertRaises(ContractViolation):
            encoder.encode(np.zeros((0, 3)))

    def test_feature_width_mismatch(self):
        encoder = TextEncoder(3, 2, 4, self.rng)
        with self.assertRaises(ContractViolation):
            encoder.encode(np.zeros((2, 5)))

    def test_encoder_gradients(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            encoder = TextEncoder(2, 2, 2, rng)
            x = ad.Tensor(rng.normal(size=(3, 2)))
            weights = rng.uniform(-1, 1, size=(3, 2))
            error = gradient_error(lambda: weighted_sum(encoder.encode(x), weights), encoder.parameters())
            self.assertLess(error, FD_TOLERANCE)


class GRUCellGradientTests(SimpleTestCase):
    def test_cell_matches_finite_differences(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            cell = GRUCell("cell", 2, 2, rng)
            x = ad.Parameter(rng.normal(size=(2, 2)), "x")
            h = ad.Parameter(rng.normal(size=(2, 2)), "h")
            weights = rng.uniform(-1, 1, size=(2, 2))
            error = gradient_error(lambda: weighted_sum(cell(x, h), weights), cell.parameters() + [x, h])
            self.assertLess(error, FD_TOLERANCE, f"seed {seed}")


class AudioVisualEncoderTests(SimpleTestCase):
    def setUp(self):
        self.proj = Linear("audio.proj", 3, 3, np.random.default_rng(0))

    def test_identity_projection(self):
        self.proj.weight.assign(np.eye(3))
        self.proj.bias.assign(np.zeros(3))
        x = np.random.default_rng(1).normal(size=(4, 3))
        np.testing.assert_array_equal(encode_audio_visual(x, self.proj).data, x)

    def test_zero_input_gives_bias(self):
        out = encode_audio_visual(np.zeros((2, 3)), self.proj).data
        np.testing.assert_array_equal(out, np.tile(self.proj.bias.data, (2, 1)))

    def test_hand_checked_product(self):
        proj = Linear("visual.proj", 3, 2, np.random.default_rng(0))
        proj.weight.assign([[1.0, 0.0], [2.0, 1.0], [0.0, -1.0]])
        proj.bias.assign([0.5, 0.0])
        out = encode_audio_visual([[1.0, 2.0, 3.0], [0.0, 1.0, 0.0]], proj).data
        np.testing.assert_allclose(out, [[5.5, -1.0], [2.5, 1.0]])

    def test_dimension_mismatch(self):
        with self.assertRaises(ContractViolation):
            encode_audio_visual(np.zeros((2, 4)), self.proj)


class ModalityEncoderTests(SimpleTestCase):
    def test_all_streams_share_the_model_dimension(self):
        rng = np.random.default_rng(0)
        encoder = ModalityEncoder(3, 2, 5, 4, 6, rng)
        text, audio, visual = encoder(rng.normal(size=(5, 3)), rng.normal(size=(5, 2)),
                                      rng.normal(size=(5, 5)), [2, 3])
        self.assertEqual({text.shape, audio.shape, visual.shape}, {(5, 6)})

    def test_only_text_carries_context_between_utterances(self):
        rng = np.random.default_rng(1)
        encoder = ModalityEncoder(3, 2, 2, 4, 5, rng)
        text, audio, visual = rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        before = encoder(text, audio, visual, [3])
        text[0] += 1.0
        audio[0] += 1.0
        visual[0] += 1.0
        after = encoder(text, audio, visual, [3])
        self.assertFalse(np.allclose(before[0].data[2], after[0].data[2]))
        np.testing.assert_array_equal(before[1].data[1:], after[1].data[1:])
        np.testing.assert_array_equal(before[2].data[1:], after[2].data[1:])

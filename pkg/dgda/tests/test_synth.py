import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import chisquare

from dgda.bounds import subsample_equal, wasserstein1_exact
from dgda.config import SyntheticConfig
from dgda.exceptions import (
    BadMagicError,
    ContractViolation,
    FeatureFormatError,
    ManifestMismatchError,
    TruncatedFileError,
)
from dgda.synth import (
    DialogueFeatures,
    DomainDataset,
    decode_features,
    embedding_dataset,
    encode_features,
    encoded_size,
    generate_pair,
    inject_label_noise,
    manifest_path,
    noise_count,
    read_features,
    rotation,
    write_features,
)

from .helpers import tiny_pair, tiny_synth


def assert_same_dataset(test, first: DomainDataset, second: DomainDataset):
    test.assertEqual(len(first), len(second))
    test.assertEqual((first.domain_tag, first.num_classes, first.dims),
                     (second.domain_tag, second.num_classes, second.dims))
    np.testing.assert_array_equal(first.noise_mask, second.noise_mask)
    for a, b in zip(first.dialogues, second.dialogues):
        test.assertEqual(a.dialogue_id, b.dialogue_id)
        for name in ("text", "audio", "visual", "speakers", "labels"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


class GeneratePairTests(SimpleTestCase):
    def test_same_seed_same_data(self):
        first, second = tiny_pair(seed=3), tiny_pair(seed=3)
        assert_same_dataset(self, first[0], second[0])
        assert_same_dataset(self, first[1], second[1])

    def test_different_seed_different_data(self):
        self.assertFalse(np.array_equal(tiny_pair(seed=1)[0].all_features("text"),
                                        tiny_pair(seed=2)[0].all_features("text")))

    def test_shapes_and_tags(self):
        source, target = tiny_pair()
        self.assertEqual((source.domain_tag, target.domain_tag), ("source", "target"))
        self.assertEqual(len(source), 6)
        for dialogue in source.dialogues:
            self.assertTrue(2 <= dialogue.num_utterances <= 3)
            self.assertEqual(dialogue.text.shape, (dialogue.num_utterances, 3))
            self.assertEqual(dialogue.audio.shape, (dialogue.num_utterances, 2))
            self.assertTrue(np.all((dialogue.labels >= 0) & (dialogue.labels < 3)))
        self.assertFalse(source.noise_mask.any())

    def test_full_stickiness_keeps_one_emotion_per_dialogue(self):
        source, _ = tiny_pair(stickiness=1.0, max_utterances=8)
        for dialogue in source.dialogues:
            self.assertEqual(len(set(dialogue.labels.tolist())), 1)

    def test_shift_moves_the_target_away(self):
        base = dict(num_classes=3, text_dim=4, audio_dim=2, visual_dim=2, dialogues_per_domain=30,
                    min_utterances=4, max_utterances=6, seed=0)
        null = generate_pair(SyntheticConfig(**base, shift=0.0, rotation_degrees=0.0, style_noise=0.0))
        shifted = generate_pair(SyntheticConfig(**base, shift=4.0))

        def distance(pair):
            x, y = subsample_equal(pair[0].all_features("text"), pair[1].all_features("text"), seed=0, max_size=100)
            return wasserstein1_exact(x, y)

        null_gap = abs(null[0].all_features("text")[:, 0].mean() - null[1].all_features("text")[:, 0].mean())
        self.assertLess(null_gap, 1.0)
        self.assertGreater(distance(shifted), distance(null) + 1.0)

    def test_default_pair_overlaps_and_shifts(self):
        source, target = generate_pair(replace(SyntheticConfig(), dialogues_per_domain=60))

        def stacked(dataset):
            return np.hstack([dataset.all_features(m) for m in ("text", "audio", "visual")])

        means = np.stack([stacked(source)[source.labels == k].mean(axis=0) for k in range(source.num_classes)])

        def nearest_mean_accuracy(dataset):
            distances = ((stacked(dataset)[:, None, :] - means[None]) ** 2).sum(axis=2)
            return float(np.mean(distances.argmin(axis=1) == dataset.labels))

        source_accuracy = nearest_mean_accuracy(source)
        self.assertLess(source_accuracy, 0.95)
        self.assertGreater(source_accuracy, 1.0 / source.num_classes)
        self.assertLess(nearest_mean_accuracy(target), source_accuracy - 0.05)

    def test_rotation_is_orthogonal(self):
        r = rotation(4, 30.0)
        np.testing.assert_allclose(r @ r.T, np.eye(4), atol=1e-12)
        np.testing.assert_array_equal(rotation(1, 30.0), np.eye(1))


class LabelNoiseTests(SimpleTestCase):
    def test_exact_flip_count(self):
        source, _ = tiny_pair()
        for rate in (0.0, 0.1, 0.25, 0.5):
            noisy = inject_label_noise(source, rate, seed=0)
            flipped = noisy.labels != source.labels
            self.assertEqual(int(flipped.sum()), noise_count(rate, source.num_utterances))
            np.testing.assert_array_equal(flipped, noisy.noise_mask)

    def test_halves_round_up(self):
        self.assertEqual(noise_count(0.5, 3), 2)
        self.assertEqual(noise_count(0.1, 15), 2)
        self.assertEqual(noise_count(0.1, 14), 1)

    def test_source_dataset_is_untouched(self):
        source, _ = tiny_pair()
        labels = source.labels.copy()
        inject_label_noise(source, 0.5, seed=1)
        np.testing.assert_array_equal(source.labels, labels)

    def test_flips_spread_uniformly_over_other_classes(self):
        config = SyntheticConfig(num_classes=4, text_dim=1, audio_dim=1, visual_dim=1, dialogues_per_domain=200,
                                 min_utterances=4, max_utterances=8, seed=0)
        source, _ = generate_pair(config)
        noisy = inject_label_noise(source, 0.5, seed=7)
        mask = noisy.noise_mask
        offsets = (noisy.labels[mask] - source.labels[mask]) % 4
        self.assertTrue(np.all(offsets > 0))
        counts = np.bincount(offsets, minlength=4)[1:]
        self.assertGreater(chisquare(counts).pvalue, 1e-3)

    def test_rate_above_half_is_rejected(self):
        source, _ = tiny_pair()
        with self.assertRaises(ContractViolation):
            inject_label_noise(source, 0.6, seed=0)


class FeatureFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "source.dgdf"
        source, _ = tiny_pair()
        self.dataset = inject_label_noise(source, 0.3, seed=2)

    def test_round_trip(self):
        for seed in range(5):
            for dataset in tiny_pair(seed=seed):
                assert_same_dataset(self, decode_features(encode_features(dataset)), dataset)
        write_features(self.dataset, self.path)
        self.assertTrue(manifest_path(self.path).exists())
        assert_same_dataset(self, read_features(self.path), self.dataset)

    def test_empty_dataset(self):
        empty = DomainDataset((), "target", 3, 3, 2, 2)
        decoded = decode_features(encode_features(empty))
        self.assertEqual(len(decoded), 0)
        self.assertEqual(decoded.dims, (3, 2, 2))

    def test_bad_magic(self):
        payload = b"XXXX" + encode_features(self.dataset)[4:]
        with self.assertRaises(BadMagicError) as ctx:
            decode_features(payload)
        self.assertIn("offset 0", str(ctx.exception))

    def test_truncated_file(self):
        payload = encode_features(self.dataset)
        for cut in (10, len(payload) // 2, len(payload) - 1):
            with self.subTest(cut=cut), self.assertRaises(TruncatedFileError):
                decode_features(payload[:cut])

    def test_payload_stops_at_the_domain_tag(self):
        for dataset in (self.dataset, self.dataset.subset([4, 1]), DomainDataset((), "target", 3, 3, 2, 2)):
            with self.subTest(dialogues=len(dataset)):
                u, d = dataset.num_utterances, len(dataset)
                header = 4 + 2 + 4 + 4 * d + 4 * 4
                body = u * 4 * sum(dataset.dims) + 2 * u + 2 * u + 1
                payload = encode_features(dataset)
                self.assertEqual(len(payload), header + body)
                self.assertEqual(encoded_size(dataset), header + body)
                self.assertEqual(payload[-1], ("source", "target").index(dataset.domain_tag))

    def test_trailing_bytes_are_rejected(self):
        with self.assertRaisesMessage(FeatureFormatError, "trailing"):
            decode_features(encode_features(self.dataset) + b"\x00")

    def test_bare_payload_has_default_mask_and_ids(self):
        decoded = decode_features(encode_features(self.dataset.subset([3, 0])))
        self.assertFalse(decoded.noise_mask.any())
        self.assertEqual([d.dialogue_id for d in decoded.dialogues], [0, 1])

    def test_manifest_carries_noise_mask_and_dialogue_ids(self):
        subset = self.dataset.subset([5, 2, 0])
        mask = np.zeros(subset.num_utterances, dtype=bool)
        mask[[0, 3]] = True
        subset = replace(subset, noise_mask=mask)
        write_features(subset, self.path)
        text = manifest_path(self.path).read_text()
        self.assertIn("dialogue_ids=5,2,0\n", text)
        self.assertIn("noise_flips=0,3\n", text)
        assert_same_dataset(self, read_features(self.path), subset)

    def test_manifest_noise_flips_out_of_range(self):
        write_features(self.dataset, self.path)
        sidecar = manifest_path(self.path)
        lines = [line for line in sidecar.read_text().splitlines() if not line.startswith("noise_flips=")]
        sidecar.write_text("\n".join(lines + [f"noise_flips={self.dataset.num_utterances}"]) + "\n")
        with self.assertRaises(ManifestMismatchError):
            read_features(self.path)

    def test_manifest_dimension_mismatch(self):
        write_features(self.dataset, self.path)
        sidecar = manifest_path(self.path)
        sidecar.write_text(sidecar.read_text().replace("text_dim=3", "text_dim=5"))
        with self.assertRaises(ManifestMismatchError):
            read_features(self.path)

    def test_manifest_checksum_mismatch(self):
        write_features(self.dataset, self.path)
        payload = bytearray(self.path.read_bytes())
        payload[60] ^= 0x01
        self.path.write_bytes(bytes(payload))
        with self.assertRaises(ManifestMismatchError):
            read_features(self.path)

    def test_missing_manifest_is_a_warning(self):
        write_features(self.dataset, self.path)
        manifest_path(self.path).unlink()
        with self.assertLogs("dgda.synth", level="WARNING"):
            read_features(self.path)


class DatasetViewTests(SimpleTestCase):
    def test_unlabeled_view_has_no_labels(self):
        source, _ = tiny_pair()
        for view in source.unlabeled():
            self.assertIs(type(view), DialogueFeatures)
            self.assertFalse(hasattr(view, "labels"))

    def test_subset_keeps_noise_mask_aligned(self):
        source = inject_label_noise(tiny_pair()[0], 0.5, seed=0)
        subset = source.subset([2, 0])
        expected = np.concatenate([source.dialogue_noise_mask(2), source.dialogue_noise_mask(0)])
        np.testing.assert_array_equal(subset.noise_mask, expected)
        self.assertEqual(subset.dialogues[0].dialogue_id, source.dialogues[2].dialogue_id)

    def test_embedding_dataset(self):
        source, _ = tiny_pair()
        embeddings = np.arange(source.num_utterances * 2, dtype=np.float64).reshape(-1, 2)
        packed = embedding_dataset(embeddings, source)
        self.assertEqual(packed.dims, (2, 0, 0))
        np.testing.assert_array_equal(packed.all_features("text"), embeddings)
        np.testing.assert_array_equal(packed.labels, source.labels)
        assert_same_dataset(self, decode_features(encode_features(packed)), packed)
        with self.assertRaises(ContractViolation):
            embedding_dataset(embeddings[1:], source)

    def test_tiny_config_is_valid(self):
        self.assertEqual(tiny_synth().num_classes, 3)

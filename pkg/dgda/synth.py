"""
Synthetic two-domain conversation datasets and the DGDF feature-file format.

DGDF layout (all little-endian)::

    b"DGDF"                      magic
    u16                          version (1)
    u32                          number of dialogues D
    u32 x D                      utterances per dialogue
    u32 x 4                      d_t, d_a, d_v, K
    f32 x (U, d_t)               text features, row-major, U = total utterances
    f32 x (U, d_a)               audio features
    f32 x (U, d_v)               visual features
    u16 x U                      labels (0-based)
    u16 x U                      speaker ids
    u8                           domain tag (0 source, 1 target)

Nothing follows the domain tag. ``<path>.manifest`` is a key=value sidecar
with the dimensions and the sha256 of the file. It also carries the state a
feature file has no room for: ``noise_flips`` (flat indices of flipped
utterances) and ``dialogue_ids``. Without a manifest the noise mask reads as
all false and dialogue ids as 0..D-1.
"""
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import SyntheticConfig, parse_key_values
from .exceptions import (
    BadMagicError,
    ContractViolation,
    FeatureFormatError,
    ManifestMismatchError,
    TruncatedFileError,
)

logger = logging.getLogger(__name__)

MAGIC = b"DGDF"
FORMAT_VERSION = 1
DOMAIN_TAGS = ("source", "target")
MAX_NOISE_RATE = 0.5


@dataclass(frozen=True)
class DialogueFeatures:
    """Training-facing view of a dialogue: features and speakers, no labels."""

    dialogue_id: int
    text: np.ndarray
    audio: np.ndarray
    visual: np.ndarray
    speakers: np.ndarray

    @property
    def num_utterances(self) -> int:
        return int(self.speakers.shape[0])


@dataclass(frozen=True)
class Dialogue(DialogueFeatures):
    labels: np.ndarray = None

    def features(self) -> DialogueFeatures:
        return DialogueFeatures(self.dialogue_id, self.text, self.audio, self.visual, self.speakers)


@dataclass
class DomainDataset:
    dialogues: tuple
    domain_tag: str
    num_classes: int
    text_dim: int
    audio_dim: int
    visual_dim: int
    noise_mask: np.ndarray = field(default=None)  # flat over utterances

    def __post_init__(self):
        self.dialogues = tuple(self.dialogues)
        if self.domain_tag not in DOMAIN_TAGS:
            raise ContractViolation(f"dataset: unknown domain tag {self.domain_tag!r}")
        if self.noise_mask is None:
            self.noise_mask = np.zeros(self.num_utterances, dtype=bool)
        self.noise_mask = np.asarray(self.noise_mask, dtype=bool)
        if self.noise_mask.shape != (self.num_utterances,):
            raise ContractViolation(
                f"dataset: noise mask of shape {self.noise_mask.shape} for {self.num_utterances} utterances"
            )

    def __len__(self) -> int:
        return len(self.dialogues)

    @property
    def dims(self) -> tuple:
        return self.text_dim, self.audio_dim, self.visual_dim

    @property
    def utterance_counts(self) -> np.ndarray:
        return np.asarray([d.num_utterances for d in self.dialogues], dtype=np.int64)

    @property
    def offsets(self) -> np.ndarray:
        counts = self.utterance_counts
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @property
    def num_utterances(self) -> int:
        return int(self.utterance_counts.sum())

    @property
    def labels(self) -> np.ndarray:
        """Flat label vector; for a target dataset this is evaluation-only."""
        if not self.dialogues:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([d.labels for d in self.dialogues]).astype(np.int64)

    def unlabeled(self) -> tuple:
        return tuple(d.features() for d in self.dialogues)

    def dialogue_noise_mask(self, index: int) -> np.ndarray:
        start, stop = self.offsets[index], self.offsets[index + 1]
        return self.noise_mask[start:stop]

    def subset(self, indices) -> "DomainDataset":
        indices = [int(i) for i in indices]
        mask = [self.dialogue_noise_mask(i) for i in indices]
        return replace(
            self,
            dialogues=tuple(self.dialogues[i] for i in indices),
            noise_mask=np.concatenate(mask) if mask else np.zeros(0, dtype=bool),
        )

    def all_features(self, modality: str) -> np.ndarray:
        width = getattr(self, f"{modality}_dim")
        if not self.dialogues:
            return np.zeros((0, width))
        return np.concatenate([getattr(d, modality) for d in self.dialogues], axis=0)


def _to_disk_precision(values: np.ndarray) -> np.ndarray:
    return values.astype(np.float32).astype(np.float64)


def rotation(dim: int, degrees: float) -> np.ndarray:
    """Givens rotation in the plane of the first two coordinates (identity when dim < 2)."""
    out = np.eye(dim)
    if dim >= 2:
        theta = math.radians(degrees)
        out[:2, :2] = [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    return out


def emotion_sequence(rng: np.random.Generator, length: int, num_classes: int, stickiness: float) -> np.ndarray:
    labels = np.empty(length, dtype=np.int64)
    labels[0] = rng.integers(num_classes)
    for t in range(1, length):
        if rng.random() < stickiness:
            labels[t] = labels[t - 1]
        else:
            # uniform over the other classes
            labels[t] = (labels[t - 1] + rng.integers(1, num_classes)) % num_classes
    return labels


def _generate_domain(config: SyntheticConfig, prototypes: list, tag: str, rng: np.random.Generator,
                     style_noise: float) -> DomainDataset:
    dims = (config.text_dim, config.audio_dim, config.visual_dim)
    dialogues = []
    for dialogue_id in range(config.dialogues_per_domain):
        n = int(rng.integers(config.min_utterances, config.max_utterances + 1))
        labels = emotion_sequence(rng, n, config.num_classes, config.stickiness)
        speakers = rng.integers(config.speakers_per_dialogue, size=n).astype(np.int64)
        streams = []
        for proto, dim in zip(prototypes, dims):
            style = rng.normal(scale=style_noise, size=dim) if style_noise > 0 else np.zeros(dim)
            streams.append(_to_disk_precision(proto[labels] + style + rng.standard_normal((n, dim))))
        dialogues.append(Dialogue(dialogue_id, *streams, speakers=speakers, labels=labels))
    return DomainDataset(tuple(dialogues), tag, config.num_classes, *dims)


def generate_pair(config: SyntheticConfig):
    """
    Source and target datasets sharing class structure. Target prototypes are
    the source prototypes rotated by ``rotation_degrees``, shifted by
    ``shift`` along the first axis, and every target dialogue carries its own
    style offset with scale ``style_noise``.
    """
    config.validate()
    proto_seq, source_seq, target_seq = np.random.SeedSequence(config.seed).spawn(3)
    proto_rng = np.random.default_rng(proto_seq)
    dims = (config.text_dim, config.audio_dim, config.visual_dim)

    source_protos, target_protos = [], []
    for dim in dims:
        mu = proto_rng.normal(scale=config.prototype_scale, size=(config.num_classes, dim))
        shift = np.zeros(dim)
        shift[0] = config.shift
        source_protos.append(mu)
        target_protos.append(mu @ rotation(dim, config.rotation_degrees).T + shift)

    source = _generate_domain(config, source_protos, "source", np.random.default_rng(source_seq), 0.0)
    target = _generate_domain(config, target_protos, "target", np.random.default_rng(target_seq),
                              config.style_noise)
    logger.info("generated %d source / %d target utterances (K=%d, seed=%d)",
                source.num_utterances, target.num_utterances, config.num_classes, config.seed)
    return source, target


def noise_count(rate: float, total: int) -> int:
    """round(rate * total), halves rounded up."""
    return int(math.floor(rate * total + 0.5))


def inject_label_noise(dataset: DomainDataset, rate: float, seed: int) -> DomainDataset:
    """Flip exactly round(rate * N) labels, each to a uniformly chosen different class."""
    if not 0.0 <= rate <= MAX_NOISE_RATE:
        raise ContractViolation(
            f"inject_label_noise: noise rate {rate} outside [0, {MAX_NOISE_RATE}]; "
            "the noise-robust loss assumes at most half the labels are wrong"
        )
    total = dataset.num_utterances
    count = noise_count(rate, total)
    if count == 0:
        return replace(dataset, noise_mask=np.zeros(total, dtype=bool))

    rng = np.random.default_rng(seed)
    flipped = rng.choice(total, size=count, replace=False)
    labels = dataset.labels
    labels[flipped] = (labels[flipped] + rng.integers(1, dataset.num_classes, size=count)) % dataset.num_classes
    mask = np.zeros(total, dtype=bool)
    mask[flipped] = True

    offsets = dataset.offsets
    dialogues = tuple(
        replace(d, labels=labels[offsets[i]: offsets[i + 1]].copy()) for i, d in enumerate(dataset.dialogues)
    )
    logger.info("flipped %d of %d %s labels (rate=%.2f)", count, total, dataset.domain_tag, rate)
    return replace(dataset, dialogues=dialogues, noise_mask=mask)


# -- DGDF I/O -----------------------------------------------------------------


def encode_features(dataset: DomainDataset) -> bytes:
    counts = dataset.utterance_counts
    header = [
        MAGIC,
        np.array([FORMAT_VERSION], dtype="<u2").tobytes(),
        np.array([len(counts)], dtype="<u4").tobytes(),
        counts.astype("<u4").tobytes(),
        np.array([*dataset.dims, dataset.num_classes], dtype="<u4").tobytes(),
    ]
    blocks = [dataset.all_features(m).astype("<f4").tobytes() for m in ("text", "audio", "visual")]
    speakers = np.concatenate([d.speakers for d in dataset.dialogues]) if dataset.dialogues else np.zeros(0)
    tail = [
        dataset.labels.astype("<u2").tobytes(),
        np.asarray(speakers).astype("<u2").tobytes(),
        bytes([DOMAIN_TAGS.index(dataset.domain_tag)]),
    ]
    return b"".join(header + blocks + tail)


def encoded_size(dataset: DomainDataset) -> int:
    """Byte length of the DGDF payload of ``dataset``."""
    utterances, width = dataset.num_utterances, sum(dataset.dims)
    return 4 + 2 + 4 + 4 * len(dataset) + 16 + 4 * utterances * width + 4 * utterances + 1


def _join_ints(values) -> str:
    return ",".join(str(int(v)) for v in values)


def _split_ints(raw: str, key: str, source: str) -> np.ndarray:
    try:
        return np.asarray([int(v) for v in raw.split(",") if v.strip()], dtype=np.int64)
    except ValueError:
        raise ManifestMismatchError(f"{source}: {key} is not a list of integers") from None


def manifest_text(dataset: DomainDataset, payload: bytes) -> str:
    lines = {
        "format": "DGDF",
        "version": FORMAT_VERSION,
        "domain": dataset.domain_tag,
        "dialogues": len(dataset),
        "utterances": dataset.num_utterances,
        "text_dim": dataset.text_dim,
        "audio_dim": dataset.audio_dim,
        "visual_dim": dataset.visual_dim,
        "num_classes": dataset.num_classes,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "noise_flips": _join_ints(np.flatnonzero(dataset.noise_mask)),
        "dialogue_ids": _join_ints(d.dialogue_id for d in dataset.dialogues),
    }
    return "".join(f"{key}={value}\n" for key, value in lines.items())


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest")


def write_features(dataset: DomainDataset, path) -> Path:
    path = Path(path)
    payload = encode_features(dataset)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    manifest_path(path).write_text(manifest_text(dataset, payload), encoding="utf-8")
    logger.debug("wrote %s (%d bytes)", path, len(payload))
    return path


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.payload) - self.offset

    def take(self, what: str, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if size > self.remaining:
            raise TruncatedFileError(what, self.offset, size, self.remaining)
        if count == 0:
            return np.zeros(0, dtype=dtype)
        out = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return out


def decode_features(payload: bytes) -> DomainDataset:
    if payload[:4] != MAGIC:
        raise BadMagicError(payload[:4], 0)
    reader = _Reader(payload)
    reader.offset = 4
    version = int(reader.take("version", "<u2", 1)[0])
    if version != FORMAT_VERSION:
        raise FeatureFormatError(f"unsupported DGDF version {version} at offset 4")
    num_dialogues = int(reader.take("dialogue count", "<u4", 1)[0])
    counts = reader.take("utterance counts", "<u4", num_dialogues).astype(np.int64)
    text_dim, audio_dim, visual_dim, num_classes = (int(v) for v in reader.take("dimensions", "<u4", 4))
    total = int(counts.sum())
    streams = [
        reader.take(f"{name} block", "<f4", total * dim).astype(np.float64).reshape(total, dim)
        for name, dim in (("text", text_dim), ("audio", audio_dim), ("visual", visual_dim))
    ]
    labels = reader.take("labels", "<u2", total).astype(np.int64)
    speakers = reader.take("speakers", "<u2", total).astype(np.int64)
    tag = int(reader.take("domain tag", "u1", 1)[0])
    if tag >= len(DOMAIN_TAGS):
        raise FeatureFormatError(f"unknown domain tag {tag} at offset {reader.offset - 1}")

    if reader.remaining:
        raise FeatureFormatError(f"{reader.remaining} trailing bytes at offset {reader.offset}")

    bounds = np.concatenate([[0], np.cumsum(counts)])
    dialogues = tuple(
        Dialogue(
            i,
            *(s[bounds[i]: bounds[i + 1]] for s in streams),
            speakers=speakers[bounds[i]: bounds[i + 1]],
            labels=labels[bounds[i]: bounds[i + 1]],
        )
        for i in range(num_dialogues)
    )
    return DomainDataset(dialogues, DOMAIN_TAGS[tag], num_classes, text_dim, audio_dim, visual_dim)


def check_manifest(dataset: DomainDataset, payload: bytes, text: str, source: str = "<manifest>") -> DomainDataset:
    """Cross-check ``dataset`` against its manifest and apply the noise mask and dialogue ids it records."""
    expected = parse_key_values(text, source)
    actual = parse_key_values(manifest_text(dataset, payload), source)
    for key in ("text_dim", "audio_dim", "visual_dim", "num_classes", "dialogues", "utterances"):
        if key in expected and expected[key] != actual[key]:
            raise ManifestMismatchError(
                f"{source}: manifest says {key}={expected[key]}, file has {key}={actual[key]}"
            )
    if "sha256" in expected and expected["sha256"] != actual["sha256"]:
        raise ManifestMismatchError(f"{source}: checksum mismatch")

    if "noise_flips" in expected:
        flips = _split_ints(expected["noise_flips"], "noise_flips", source)
        if flips.size and (flips.min() < 0 or flips.max() >= dataset.num_utterances):
            raise ManifestMismatchError(f"{source}: noise_flips index outside [0, {dataset.num_utterances})")
        mask = np.zeros(dataset.num_utterances, dtype=bool)
        mask[flips] = True
        dataset = replace(dataset, noise_mask=mask)
    if "dialogue_ids" in expected:
        ids = _split_ints(expected["dialogue_ids"], "dialogue_ids", source)
        if ids.shape != (len(dataset),):
            raise ManifestMismatchError(f"{source}: {ids.size} dialogue ids for {len(dataset)} dialogues")
        dataset = replace(dataset, dialogues=tuple(
            replace(d, dialogue_id=int(i)) for d, i in zip(dataset.dialogues, ids)
        ))
    return dataset


def read_features(path) -> DomainDataset:
    path = Path(path)
    payload = path.read_bytes()
    dataset = decode_features(payload)
    sidecar = manifest_path(path)
    if sidecar.exists():
        return check_manifest(dataset, payload, sidecar.read_text(encoding="utf-8"), str(sidecar))
    logger.warning("no manifest next to %s; dimensions not cross-checked", path)
    return dataset


# -- embedding dumps ----------------------------------------------------------


def embedding_dataset(embeddings: np.ndarray, template: DomainDataset) -> DomainDataset:
    """
    Per-utterance embeddings packaged as a DGDF dataset: the text block holds
    the embedding, the audio and visual blocks are empty.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] != template.num_utterances:
        raise ContractViolation(
            f"embedding_dataset: {embeddings.shape[0]} rows for {template.num_utterances} utterances"
        )
    offsets = template.offsets
    empty = np.zeros((0,))
    dialogues = tuple(
        replace(
            d,
            text=_to_disk_precision(embeddings[offsets[i]: offsets[i + 1]]),
            audio=empty.reshape(d.num_utterances, 0),
            visual=empty.reshape(d.num_utterances, 0),
        )
        for i, d in enumerate(template.dialogues)
    )
    return replace(template, dialogues=dialogues, text_dim=embeddings.shape[1], audio_dim=0, visual_dim=0)

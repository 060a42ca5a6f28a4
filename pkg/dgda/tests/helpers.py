"""Oracles and tiny fixtures shared by the test modules."""
import itertools
import math
from dataclasses import replace

import numpy as np

from dgda import autodiff as ad
from dgda.config import SyntheticConfig, TrainConfig
from dgda.graphs import GraphBatch
from dgda.model import MixedBatch
from dgda.synth import generate_pair
from dgda.trainer import SOURCE, TARGET, prepare_domain

FD_STEP = 1e-6
FD_TOLERANCE = 1e-4


def numeric_gradient(loss_fn, tensor: ad.Parameter, eps: float = FD_STEP) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to every entry of ``tensor``."""
    base = tensor.data.copy()
    out = np.zeros_like(base)
    with ad.no_grad():
        for index in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[index] += eps
            tensor.assign(shifted)
            plus = loss_fn().item()
            shifted[index] -= 2 * eps
            tensor.assign(shifted)
            minus = loss_fn().item()
            out[index] = (plus - minus) / (2 * eps)
    tensor.assign(base)
    return out


def relative_error(analytic, numeric) -> float:
    """max |a - n| / max(1, |a|, |n|) over entries."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def gradient_error(loss_fn, params) -> float:
    """Worst relative error between tape gradients and finite differences."""
    params = list(params)
    analytic = ad.grad(loss_fn(), params)
    return max(relative_error(a, numeric_gradient(loss_fn, p)) for p, a in zip(params, analytic))


def weighted_sum(out: ad.Tensor, weights) -> ad.Tensor:
    """Scalar test loss sum(out * weights), so every output entry gets its own cotangent."""
    return ad.sum_all(ad.hadamard(out, ad.Tensor(weights)))


def random_parameter(rng, shape, name="x", low=-1.0, high=1.0) -> ad.Parameter:
    return ad.Parameter(rng.uniform(low, high, size=shape), name)


def away_from_zero(rng, shape, low=0.1, high=1.0) -> np.ndarray:
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def zero_parameters(block) -> None:
    for p in block.parameters():
        p.assign(np.zeros(p.shape))


# -- brute-force oracles ------------------------------------------------------


def brute_force_w1(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    n = len(x)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, sum(np.linalg.norm(x[i] - y[perm[i]]) for i in range(n)))
    return best / n


def brute_force_paths(successors, max_length: int) -> set:
    """Every simple path of 1..max_length nodes, found by checking all node sequences."""
    num_nodes = len(successors)
    edges = {(u, v) for u, vs in enumerate(successors) for v in vs}
    found = set()
    for length in range(1, max_length + 1):
        for seq in itertools.product(range(num_nodes), repeat=length):
            if len(set(seq)) == length and all((a, b) in edges for a, b in zip(seq, seq[1:])):
                found.add(seq)
    return found


def counting_f1(predictions, labels, num_classes: int):
    """Per-class F1 and support-weighted F1 from raw counts."""
    predictions = list(predictions)
    labels = list(labels)
    scores, supports = [], []
    for k in range(num_classes):
        tp = sum(1 for p, y in zip(predictions, labels) if p == k and y == k)
        fp = sum(1 for p, y in zip(predictions, labels) if p == k and y != k)
        fn = sum(1 for p, y in zip(predictions, labels) if p != k and y == k)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
        supports.append(fn + tp)
    total = sum(supports)
    return scores, sum(s * f for s, f in zip(supports, scores)) / total


def theorem1_formula(es, et, ns, nt, d, delta, lip, w1, omega) -> float:
    complexity = math.sqrt((4 * d / ns) * math.log(math.e * ns / d) + (1 / ns) * math.log(1 / delta))
    return (nt / (ns + nt)) * et + (ns / (ns + nt)) * (es + complexity) + (ns / (ns + nt)) * (2 * lip * w1 + omega)


def theorem3_formula(r, lam, n, delta, noise, eps, margin) -> float:
    return 2 * r / math.sqrt(lam) + math.sqrt(math.log(1 / delta) / (2 * n)) + (noise + eps) / margin


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def leaky(x, slope=ad.DEFAULT_LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def pathnn_oracle(features, paths, W, a, slope=ad.DEFAULT_LEAKY_SLOPE, end_injection=False):
    """Node update from per-path loops: context, attention, embedding, mean injection."""
    features = np.asarray(features, dtype=np.float64)
    projected = features @ W
    received = [[] for _ in range(features.shape[0])]
    for path in paths:
        rows = projected[list(path)]
        context = rows.mean(axis=0)
        scores = np.array([leaky(a @ np.concatenate([row, context]), slope) for row in rows])
        weights = np.exp(scores - scores.max())
        alpha = weights / weights.sum()
        embedded = (alpha[:, None] * rows).sum(axis=0)
        received[path[0]].append(embedded)
        if end_injection and len(path) > 1:
            received[path[-1]].append(embedded)
    return features + np.array([np.mean(r, axis=0) for r in received])


def path_batch(num_nodes: int, paths) -> GraphBatch:
    """GraphBatch carrying only paths, for exercising the path branch on hand-made path sets."""
    paths = [tuple(p) for p in paths]
    length = max(len(p) for p in paths)
    nodes = np.zeros((len(paths), length), dtype=np.int64)
    mask = np.zeros((len(paths), length))
    for row, p in enumerate(paths):
        nodes[row, : len(p)] = p
        mask[row, : len(p)] = 1.0
    return GraphBatch(
        num_nodes=num_nodes,
        incidence=np.zeros((num_nodes, 0)),
        edge_kinds=np.zeros(0, dtype=np.int64),
        path_nodes=nodes,
        path_mask=mask,
        path_lengths=mask.sum(axis=1).astype(np.int64),
    )


# -- tiny fixtures ------------------------------------------------------------


def tiny_synth(**overrides) -> SyntheticConfig:
    config = SyntheticConfig(
        num_classes=3,
        text_dim=3,
        audio_dim=2,
        visual_dim=2,
        dialogues_per_domain=6,
        min_utterances=2,
        max_utterances=3,
    )
    return replace(config, **overrides).validate()


def tiny_config(**overrides) -> TrainConfig:
    config = TrainConfig(
        epochs=1,
        batch_size=4,
        model_dim=4,
        gru_hidden=3,
        hgnn_layers=1,
        disc_hidden=3,
        max_paths=4,
        max_path_length=2,
        context_window=1,
        synth=tiny_synth(),
    )
    return replace(config, **overrides).validate()


def tiny_pair(seed: int = 0, **overrides):
    return generate_pair(tiny_synth(seed=seed, **overrides))


TINY_ARGS = [
    "--epochs=1",
    "--batch_size=4",
    "--model_dim=4",
    "--gru_hidden=3",
    "--hgnn_layers=1",
    "--disc_hidden=3",
    "--max_paths=4",
    "--max_path_length=2",
    "--context_window=1",
    "--synth.num_classes=3",
    "--synth.text_dim=3",
    "--synth.audio_dim=2",
    "--synth.visual_dim=2",
    "--synth.dialogues_per_domain=6",
    "--synth.min_utterances=2",
    "--synth.max_utterances=3",
]


def tiny_mixed_batch(config: TrainConfig = None, dialogues=(0, 1)):
    """(batch, dims, num_classes) for a couple of dialogues from each tiny domain."""
    config = config or tiny_config()
    source, target = generate_pair(config.synth)
    source_batch = prepare_domain(source, config, SOURCE).batch(list(dialogues))
    batch = MixedBatch(
        source=source_batch,
        target=prepare_domain(target, config, TARGET).batch(list(dialogues)),
        source_labels=source.labels[source_batch.sample_ids],
    )
    return batch, source.dims, source.num_classes


def snapshot_values(params) -> dict:
    return {p.name: p.data.copy() for p in params}


def changed_names(before: dict, params) -> set:
    return {p.name for p in params if not np.array_equal(before[p.name], p.data)}

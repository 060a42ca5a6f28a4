"""
Path branch: attention over the nodes of each enumerated path, a weighted
path embedding, and a residual update of every node with the mean embedding
of the paths that start at it.

Node features are row vectors, so the projection is written ``h @ W``.
"""
import numpy as np

from . import autodiff as ad
from .exceptions import ContractViolation
from .graphs import GraphBatch
from .layers import Block, uniform_init


class PathnnBranch(Block):
    def __init__(self, model_dim: int, rng: np.random.Generator, slope: float = ad.DEFAULT_LEAKY_SLOPE,
                 rounds: int = 1, end_injection: bool = False):
        self.W = ad.Parameter(uniform_init(rng, (model_dim, model_dim), model_dim), "pathnn.W")
        self.a = ad.Parameter(uniform_init(rng, (2 * model_dim,), 2 * model_dim), "pathnn.attention")
        if self.a.shape[0] != 2 * self.W.shape[1]:
            raise ContractViolation("pathnn: attention vector must be twice the projection width")
        self.slope = slope
        self.rounds = rounds
        self.end_injection = end_injection

    def __call__(self, features: ad.Tensor, batch: GraphBatch) -> ad.Tensor:
        return pathnn_forward(features, batch, self)


def _path_rows(path, features: ad.Tensor, params: PathnnBranch) -> ad.Tensor:
    if len(path) == 0:
        raise ContractViolation("pathnn: empty path")
    return ad.matmul(ad.take_rows(ad.as_tensor(features), list(path)), params.W)


def path_context(path, features, params: PathnnBranch) -> ad.Tensor:
    rows = _path_rows(path, features, params)
    return ad.scalar_mul(ad.row_sum(ad.transpose(rows)), 1.0 / len(path))


def path_attention(path, features, context: ad.Tensor, params: PathnnBranch) -> ad.Tensor:
    rows = _path_rows(path, features, params)
    tiled = ad.take_rows(ad.reshape(context, (1, context.shape[0])), [0] * len(path))
    scores = ad.leaky_relu(ad.matmul(ad.concat_lastdim([rows, tiled]), params.a), params.slope)
    return ad.softmax(scores)


def path_embed(path, features, alpha: ad.Tensor, params: PathnnBranch) -> ad.Tensor:
    rows = _path_rows(path, features, params)
    return ad.matmul(ad.transpose(rows), alpha)


def pathnn_forward(features, batch: GraphBatch, params: PathnnBranch) -> ad.Tensor:
    x = ad.as_tensor(features)
    if x.ndim != 2 or x.shape[0] != batch.num_nodes:
        raise ContractViolation(f"pathnn: {x.shape} features for {batch.num_nodes} nodes")
    targets, sources = _injection_targets(batch, params.end_injection)
    counts = np.bincount(targets, minlength=batch.num_nodes).astype(np.float64)
    if np.any(counts == 0):
        raise ContractViolation(f"pathnn: {int((counts == 0).sum())} nodes have no paths")
    inv_counts = ad.Tensor(1.0 / counts)
    for _ in range(params.rounds):
        embedded = path_embeddings(x, batch, params)
        if sources is not None:
            embedded = ad.concat_rows([embedded, ad.take_rows(embedded, sources)])
        x = ad.add(x, ad.scale_rows(ad.scatter_rows(embedded, targets, batch.num_nodes), inv_counts))
    return x


def _injection_targets(batch: GraphBatch, end_injection: bool):
    starts = batch.path_starts
    if not end_injection:
        return starts, None
    longer = np.flatnonzero(batch.path_lengths > 1)
    return np.concatenate([starts, batch.path_ends[longer]]), longer


def path_embeddings(x: ad.Tensor, batch: GraphBatch, params: PathnnBranch) -> ad.Tensor:
    """All path embeddings h_p at once: (P, D)."""
    projected = ad.matmul(x, params.W)
    nodes, mask = batch.path_nodes, batch.path_mask
    num_paths, length = nodes.shape
    columns = [ad.take_rows(projected, nodes[:, j]) for j in range(length)]

    inv_length = 1.0 / batch.path_lengths
    context = ad.scale_rows(columns[0], ad.Tensor(mask[:, 0] * inv_length))
    for j in range(1, length):
        context = ad.add(context, ad.scale_rows(columns[j], ad.Tensor(mask[:, j] * inv_length)))

    scores = [
        ad.reshape(ad.leaky_relu(ad.matmul(ad.concat_lastdim([col, context]), params.a), params.slope),
                   (num_paths, 1))
        for col in columns
    ]
    logits = ad.add(ad.concat_lastdim(scores), ad.Tensor(np.where(mask > 0, 0.0, -np.inf)))
    alpha = ad.softmax(logits)

    embedded = None
    for j, col in enumerate(columns):
        weight = ad.matmul(alpha, ad.Tensor(np.eye(length)[j]))
        term = ad.scale_rows(col, weight)
        embedded = term if embedded is None else ad.add(embedded, term)
    return embedded

"""
Hypergraph convolution branch.

One layer computes sigma(D^-1 H W_e B^-1 H^T (X W + b)): node features are
pooled into hyperedges (normalised by hyperedge size), weighted, and pooled
back into nodes (normalised by weighted node degree).
"""
import numpy as np

from . import autodiff as ad
from .exceptions import ContractViolation
from .graphs import HYPEREDGE_KINDS, GraphBatch
from .layers import Block, Linear


def hgnn_layer(features: ad.Tensor, incidence: np.ndarray, log_weights: ad.Tensor,
               proj: Linear = None, activation=None) -> ad.Tensor:
    """``proj=None`` and ``activation=None`` give the bare propagation."""
    features = ad.as_tensor(features)
    incidence = np.asarray(incidence, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != incidence.shape[0]:
        raise ContractViolation(
            f"hgnn_layer: {features.shape} features for a hypergraph with {incidence.shape[0]} nodes"
        )
    if log_weights.shape != (incidence.shape[1],):
        raise ContractViolation(
            f"hgnn_layer: {log_weights.shape} hyperedge weights for {incidence.shape[1]} hyperedges"
        )
    h = ad.Tensor(incidence)
    weights = ad.exp(log_weights)
    inv_edge_degree = ad.Tensor(1.0 / incidence.sum(axis=0))

    x = proj(features) if proj is not None else features
    edges = ad.scale_rows(ad.matmul(ad.transpose(h), x), inv_edge_degree)
    edges = ad.scale_rows(edges, weights)
    nodes = ad.scale_rows(ad.matmul(h, edges), ad.reciprocal(ad.matmul(h, weights)))
    return activation(nodes) if activation is not None else nodes


class HgnnBranch(Block):
    def __init__(self, model_dim: int, layer_count: int, rng: np.random.Generator,
                 residual: bool = True, slope: float = ad.DEFAULT_LEAKY_SLOPE):
        if layer_count < 1:
            raise ContractViolation(f"hgnn: layer_count must be >= 1, got {layer_count}")
        self.layers = [Linear(f"hgnn.layer{l}", model_dim, model_dim, rng) for l in range(layer_count)]
        # one weight per hyperedge kind so the weights transfer across dialogues
        self.kind_log_weights = ad.Parameter(np.zeros(len(HYPEREDGE_KINDS)), "hgnn.hyperedge_log_weights")
        self.residual = residual
        self.slope = slope

    def activation(self, x: ad.Tensor) -> ad.Tensor:
        return ad.leaky_relu(x, self.slope)

    def edge_log_weights(self, edge_kinds) -> ad.Tensor:
        return ad.take_rows(self.kind_log_weights, edge_kinds)

    def __call__(self, features: ad.Tensor, batch: GraphBatch, log_weights: ad.Tensor = None) -> ad.Tensor:
        if log_weights is None:
            log_weights = self.edge_log_weights(batch.edge_kinds)
        return hgnn_forward(features, batch.incidence, log_weights, self)


def hgnn_forward(features, incidence, log_weights, branch: HgnnBranch) -> ad.Tensor:
    x = ad.as_tensor(features)
    for proj in branch.layers:
        out = hgnn_layer(x, incidence, log_weights, proj, branch.activation)
        x = ad.add(x, out) if branch.residual else out
    return x

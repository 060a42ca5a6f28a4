"""
The dual-branch classifier: modality encoders, HGNN and PathNN branches over
the same modality nodes, per-branch perturbation maps, discriminators and
classification heads, and the fusion head that turns pooled branch
embeddings into per-utterance emotion distributions.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .alignment import Discriminator, Perturbation
from .config import TrainConfig
from .encoders import ModalityEncoder
from .exceptions import ContractViolation
from .graphs import NUM_MODALITIES, GraphBatch, batch_structures
from .hgnn import HgnnBranch
from .layers import Block, Linear, check_unique_names
from .pathnn import PathnnBranch

logger = logging.getLogger(__name__)

BRANCHES = ("hgnn", "pathnn")


@dataclass(frozen=True)
class DomainBatch:
    """Features and graph structure of a group of dialogues from one domain."""

    text: np.ndarray
    audio: np.ndarray
    visual: np.ndarray
    lengths: np.ndarray
    graph: GraphBatch
    sample_ids: np.ndarray  # dataset-wide utterance ids, in row order

    @property
    def num_utterances(self) -> int:
        return int(self.lengths.sum())


@dataclass(frozen=True)
class MixedBatch:
    source: DomainBatch
    target: DomainBatch
    source_labels: np.ndarray


def make_domain_batch(dialogues, structures, sample_ids) -> DomainBatch:
    dialogues = list(dialogues)
    if not dialogues:
        raise ContractViolation("make_domain_batch: empty batch")
    return DomainBatch(
        text=np.concatenate([d.text for d in dialogues]),
        audio=np.concatenate([d.audio for d in dialogues]),
        visual=np.concatenate([d.visual for d in dialogues]),
        lengths=np.asarray([d.num_utterances for d in dialogues], dtype=np.int64),
        graph=batch_structures(structures),
        sample_ids=np.asarray(sample_ids, dtype=np.int64),
    )


def interleave_modalities(text: ad.Tensor, audio: ad.Tensor, visual: ad.Tensor) -> ad.Tensor:
    """Row 3 * i + m of the result is modality m of utterance i."""
    n = text.shape[0]
    if audio.shape != text.shape or visual.shape != text.shape:
        raise ContractViolation(
            f"interleave_modalities: modality shapes differ {text.shape}, {audio.shape}, {visual.shape}"
        )
    nodes = np.arange(NUM_MODALITIES * n)
    return ad.take_rows(ad.concat_rows([text, audio, visual]), (nodes % NUM_MODALITIES) * n + nodes // NUM_MODALITIES)


def pool_utterances(node_features: ad.Tensor, num_utterances: int) -> ad.Tensor:
    """Mean over the three modality nodes of each utterance."""
    if node_features.shape[0] != NUM_MODALITIES * num_utterances:
        raise ContractViolation(
            f"pool_utterances: {node_features.shape[0]} nodes for {num_utterances} utterances"
        )
    owners = np.arange(node_features.shape[0]) // NUM_MODALITIES
    return ad.scalar_mul(ad.scatter_rows(node_features, owners, num_utterances), 1.0 / NUM_MODALITIES)


def fuse_and_classify(embeddings, head: Linear) -> ad.Tensor:
    """Concatenate pooled branch embeddings and map them to class distributions."""
    embeddings = list(embeddings)
    if not embeddings:
        raise ContractViolation("fuse_and_classify: no branch embeddings")
    rows = {e.shape[0] for e in embeddings}
    if len(rows) != 1:
        raise ContractViolation(f"fuse_and_classify: branch embeddings are not aligned on utterances: {rows}")
    fused = embeddings[0] if len(embeddings) == 1 else ad.concat_lastdim(embeddings)
    return ad.softmax(head(fused))


@dataclass
class ClassifierOutput:
    probs: ad.Tensor
    branch_logits: dict
    embeddings: dict

    def branch_probs(self, branch: str) -> ad.Tensor:
        return ad.softmax(self.branch_logits[branch])


class DgdaModel(Block):
    def __init__(self, config: TrainConfig, dims, num_classes: int):
        text_dim, audio_dim, visual_dim = dims
        rng = np.random.default_rng(config.seed)
        d = config.model_dim
        self.branches = config.branches
        self.num_classes = num_classes
        self.dims = tuple(dims)

        self.encoder = ModalityEncoder(text_dim, audio_dim, visual_dim, config.gru_hidden, d, rng)
        self.hgnn = HgnnBranch(d, config.hgnn_layers, rng, config.hgnn_residual, config.leaky_slope) \
            if config.use_hgnn else None
        self.pathnn = PathnnBranch(d, rng, config.leaky_slope, config.pathnn_rounds, config.path_end_injection) \
            if config.use_pathnn else None
        self.perturbations = {
            b: Perturbation(b, d, config.branch_delta(b), rng, config.leaky_slope) for b in self.branches
        }
        self.discriminators = {
            b: Discriminator(b, d, config.disc_hidden, rng, config.leaky_slope) for b in self.branches
        }
        self.heads = {b: Linear(f"{b}.head", d, num_classes, rng) for b in self.branches}
        self.fusion = Linear("fusion", d * len(self.branches), num_classes, rng)
        check_unique_names(self.parameters())

    # -- parameter groups -------------------------------------------------------

    def branch_module(self, branch: str) -> Block:
        if branch not in self.branches:
            raise ContractViolation(f"model: branch {branch!r} is disabled")
        return getattr(self, branch)

    def discriminator_parameters(self) -> list:
        return [p for b in self.branches for p in self.discriminators[b].parameters()]

    def alignment_parameters(self) -> list:
        params = self.encoder.parameters()
        for b in self.branches:
            params += self.branch_module(b).parameters() + self.perturbations[b].parameters()
        return params

    def coupling_parameters(self, branch: str) -> list:
        return self.branch_module(branch).parameters() + self.heads[branch].parameters()

    def classification_parameters(self) -> list:
        params = self.encoder.parameters()
        for b in self.branches:
            params += self.branch_module(b).parameters()
        return params + self.fusion.parameters()

    # -- forward ----------------------------------------------------------------

    def encode(self, batch: DomainBatch) -> ad.Tensor:
        if batch.graph.num_nodes != NUM_MODALITIES * batch.num_utterances:
            raise ContractViolation(
                f"model: graph with {batch.graph.num_nodes} nodes for {batch.num_utterances} utterances"
            )
        text, audio, visual = self.encoder(batch.text, batch.audio, batch.visual, batch.lengths)
        return interleave_modalities(text, audio, visual)

    def branch_nodes(self, nodes: ad.Tensor, batch: DomainBatch, branch: str) -> ad.Tensor:
        return self.branch_module(branch)(nodes, batch.graph)

    def branch_embedding(self, batch: DomainBatch, branch: str, nodes: ad.Tensor = None) -> ad.Tensor:
        nodes = self.encode(batch) if nodes is None else nodes
        return pool_utterances(self.branch_nodes(nodes, batch, branch), batch.num_utterances)

    def branch_probabilities(self, batch: DomainBatch, branch: str) -> ad.Tensor:
        return ad.softmax(self.heads[branch](self.branch_embedding(batch, branch)))

    def classify(self, batch: DomainBatch) -> ClassifierOutput:
        nodes = self.encode(batch)
        embeddings = {b: self.branch_embedding(batch, b, nodes) for b in self.branches}
        probs = fuse_and_classify([embeddings[b] for b in self.branches], self.fusion)
        return ClassifierOutput(
            probs=probs,
            branch_logits={b: self.heads[b](embeddings[b]) for b in self.branches},
            embeddings=embeddings,
        )

    def aligned_features(self, batch: MixedBatch) -> dict:
        """Perturbed branch node features of both domains, per branch."""
        nodes = {"source": self.encode(batch.source), "target": self.encode(batch.target)}
        out = {}
        for b in self.branches:
            src = self.branch_nodes(nodes["source"], batch.source, b)
            tgt = self.branch_nodes(nodes["target"], batch.target, b)
            out[b] = (self.perturbations[b](src), self.perturbations[b](tgt))
        return out

    def fused_embedding(self, batch: DomainBatch) -> np.ndarray:
        with ad.no_grad():
            output = self.classify(batch)
        return np.concatenate([output.embeddings[b].data for b in self.branches], axis=1)

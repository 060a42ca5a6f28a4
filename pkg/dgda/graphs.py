"""
Graph structures for one dialogue: the emotion interaction graph over
modality nodes, the hypergraph incidence structure and the enumerated path
set, plus the block-diagonal batch that stacks several dialogues.

Node ``3 * i + m`` is modality ``m`` (text, audio, visual) of utterance ``i``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation

logger = logging.getLogger(__name__)

MODALITIES = ("text", "audio", "visual")
NUM_MODALITIES = len(MODALITIES)

TEMPORAL_PAST = "temporal-past"
TEMPORAL_FUTURE = "temporal-future"
SAME_SPEAKER = "same-speaker"
CROSS_MODAL = "cross-modal"

UTTERANCE_EDGE = 0
# modality hyperedges use kind 1 + modality
HYPEREDGE_KINDS = ("utterance", "text-modality", "audio-modality", "visual-modality")


def node_id(utterance: int, modality: int) -> int:
    return utterance * NUM_MODALITIES + modality


@dataclass(frozen=True)
class DialogueGraph:
    num_utterances: int
    context_window: int
    edges: tuple  # sorted (u, v) pairs
    relations: tuple  # relation tag per edge

    @property
    def num_nodes(self) -> int:
        return self.num_utterances * NUM_MODALITIES

    def edges_with(self, relation: str) -> list:
        return [e for e, r in zip(self.edges, self.relations) if r == relation]

    def successors(self, include_cross_modal: bool = True) -> list:
        out = [[] for _ in range(self.num_nodes)]
        for (u, v), relation in zip(self.edges, self.relations):
            if include_cross_modal or relation != CROSS_MODAL:
                out[u].append(v)
        return [sorted(s) for s in out]


def build_emotion_graph(speakers, context_window: int) -> DialogueGraph:
    """
    Temporal edges join same-modality nodes at most ``context_window`` turns
    apart, same-speaker edges join an utterance to the previous turn of the
    same speaker when that turn lies outside the window, and cross-modal edges
    join the three modality nodes of each utterance.
    """
    speakers = list(speakers)
    n = len(speakers)
    if n < 1:
        raise ContractViolation("build_emotion_graph: a dialogue needs at least one utterance")
    if context_window < 0:
        raise ContractViolation(f"build_emotion_graph: negative context window {context_window}")

    tagged = {}
    for m in range(NUM_MODALITIES):
        for i in range(n):
            for j in range(max(0, i - context_window), min(n, i + context_window + 1)):
                if i != j:
                    tagged[(node_id(i, m), node_id(j, m))] = TEMPORAL_PAST if j < i else TEMPORAL_FUTURE

    last_turn = {}
    for i, speaker in enumerate(speakers):
        j = last_turn.get(speaker)
        if j is not None and i - j > context_window:
            for m in range(NUM_MODALITIES):
                tagged[(node_id(i, m), node_id(j, m))] = SAME_SPEAKER
                tagged[(node_id(j, m), node_id(i, m))] = SAME_SPEAKER
        last_turn[speaker] = i

    for i in range(n):
        for a in range(NUM_MODALITIES):
            for b in range(NUM_MODALITIES):
                if a != b:
                    tagged[(node_id(i, a), node_id(i, b))] = CROSS_MODAL

    edges = tuple(sorted(tagged))
    return DialogueGraph(
        num_utterances=n,
        context_window=context_window,
        edges=edges,
        relations=tuple(tagged[e] for e in edges),
    )


@dataclass
class Hypergraph:
    incidence: np.ndarray  # |V| x |E|, 0/1
    edge_kinds: np.ndarray  # |E|, index into HYPEREDGE_KINDS

    @property
    def num_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def num_edges(self) -> int:
        return self.incidence.shape[1]

    @property
    def hyperedge_weights(self) -> np.ndarray:
        """Unit weights; learned weights live on the HGNN branch, one per hyperedge kind."""
        return np.ones(self.num_edges)

    def kind_weights(self, kind_log_weights) -> np.ndarray:
        """w(e) = exp(s_k) for the kind k of each hyperedge."""
        return np.exp(np.asarray(kind_log_weights, dtype=np.float64)[self.edge_kinds])

    @property
    def node_degree(self) -> np.ndarray:
        return self.incidence @ self.hyperedge_weights

    @property
    def hyperedge_degree(self) -> np.ndarray:
        return self.incidence.sum(axis=0)

    def check(self) -> None:
        if np.any(self.hyperedge_degree < 2):
            raise ContractViolation("hypergraph: every hyperedge needs at least two nodes")
        if np.any(self.node_degree <= 0):
            raise ContractViolation("hypergraph: every node must belong to a hyperedge")

    def propagation_matrix(self, weights=None) -> np.ndarray:
        """Dense D^-1 H W_e B^-1 H^T for diagnostics."""
        w = self.hyperedge_weights if weights is None else np.asarray(weights, dtype=np.float64)
        h = self.incidence
        weighted = h * w
        return (weighted / weighted.sum(axis=1, keepdims=True)) @ (h / h.sum(axis=0)).T


def build_hypergraph(num_utterances: int) -> Hypergraph:
    if num_utterances < 1:
        raise ContractViolation("build_hypergraph: a dialogue needs at least one utterance")
    n = num_utterances
    columns, kinds = [], []
    for i in range(n):
        column = np.zeros(n * NUM_MODALITIES)
        column[[node_id(i, m) for m in range(NUM_MODALITIES)]] = 1.0
        columns.append(column)
        kinds.append(UTTERANCE_EDGE)
    if n >= 2:
        for m in range(NUM_MODALITIES):
            column = np.zeros(n * NUM_MODALITIES)
            column[[node_id(i, m) for i in range(n)]] = 1.0
            columns.append(column)
            kinds.append(1 + m)
    hypergraph = Hypergraph(
        incidence=np.stack(columns, axis=1),
        edge_kinds=np.asarray(kinds, dtype=np.int64),
    )
    hypergraph.check()
    return hypergraph


@dataclass(frozen=True)
class PathSet:
    num_nodes: int
    paths: tuple  # tuples of node ids
    index: dict = field(default_factory=dict)  # node -> ids of paths starting there

    @property
    def max_length(self) -> int:
        return max((len(p) for p in self.paths), default=0)

    def padded(self):
        """(P, L) node ids padded with 0, (P, L) validity mask, lengths."""
        length = self.max_length
        nodes = np.zeros((len(self.paths), length), dtype=np.int64)
        mask = np.zeros((len(self.paths), length))
        for row, path in enumerate(self.paths):
            nodes[row, : len(path)] = path
            mask[row, : len(path)] = 1.0
        return nodes, mask, mask.sum(axis=1).astype(np.int64)


def _simple_paths(successors, start: int, max_length: int) -> list:
    found = []
    stack = [(start,)]
    while stack:
        path = stack.pop()
        found.append(path)
        if len(path) < max_length:
            # reversed so the smallest successor is expanded first
            for nxt in reversed(successors[path[-1]]):
                if nxt not in path:
                    stack.append(path + (nxt,))
    return found


def enumerate_paths(graph: DialogueGraph, max_length: int, max_paths: int, seed: int,
                    include_cross_modal: bool = True) -> PathSet:
    """
    Simple paths from every node in depth-first preorder, visiting successors
    in ascending id order. A node with more than ``max_paths`` paths keeps its trivial
    path plus a seeded uniform subsample of the rest.
    """
    if max_length < 1:
        raise ContractViolation(f"enumerate_paths: max_length must be >= 1, got {max_length}")
    if max_paths < 1:
        raise ContractViolation(f"enumerate_paths: max_paths must be >= 1, got {max_paths}")
    rng = np.random.default_rng(seed)
    successors = graph.successors(include_cross_modal)
    paths, index = [], {}
    for v in range(graph.num_nodes):
        found = _simple_paths(successors, v, max_length)
        if len(found) > max_paths:
            keep = np.sort(rng.choice(np.arange(1, len(found)), size=max_paths - 1, replace=False))
            found = [found[0]] + [found[k] for k in keep]
        index[v] = list(range(len(paths), len(paths) + len(found)))
        paths.extend(found)
    return PathSet(num_nodes=graph.num_nodes, paths=tuple(paths), index=index)


@dataclass(frozen=True)
class DialogueStructure:
    """Everything graph-shaped about one dialogue, built once and reused every epoch."""

    graph: DialogueGraph
    hypergraph: Hypergraph
    paths: PathSet


def build_structure(speakers, context_window: int, max_length: int, max_paths: int, seed: int,
                    include_cross_modal: bool = True) -> DialogueStructure:
    graph = build_emotion_graph(speakers, context_window)
    return DialogueStructure(
        graph=graph,
        hypergraph=build_hypergraph(graph.num_utterances),
        paths=enumerate_paths(graph, max_length, max_paths, seed, include_cross_modal),
    )


@dataclass(frozen=True)
class GraphBatch:
    """Several dialogues stacked block-diagonally; node ids are offset per dialogue."""

    num_nodes: int
    incidence: np.ndarray
    edge_kinds: np.ndarray
    path_nodes: np.ndarray  # (P, L)
    path_mask: np.ndarray  # (P, L)
    path_lengths: np.ndarray  # (P,)

    @property
    def path_starts(self) -> np.ndarray:
        return self.path_nodes[:, 0]

    @property
    def path_ends(self) -> np.ndarray:
        return self.path_nodes[np.arange(len(self.path_nodes)), self.path_lengths - 1]


def batch_structures(structures) -> GraphBatch:
    structures = list(structures)
    if not structures:
        raise ContractViolation("batch_structures: empty batch")
    num_nodes = sum(s.graph.num_nodes for s in structures)
    num_edges = sum(s.hypergraph.num_edges for s in structures)
    length = max(s.paths.max_length for s in structures)
    incidence = np.zeros((num_nodes, num_edges))
    kinds, path_nodes, path_mask = [], [], []
    row = col = 0
    for s in structures:
        h = s.hypergraph.incidence
        incidence[row: row + h.shape[0], col: col + h.shape[1]] = h
        kinds.append(s.hypergraph.edge_kinds)
        nodes, mask, _ = s.paths.padded()
        padded_nodes = np.zeros((len(nodes), length), dtype=np.int64)
        padded_mask = np.zeros((len(nodes), length))
        padded_nodes[:, : nodes.shape[1]] = nodes + row
        padded_mask[:, : mask.shape[1]] = mask
        path_nodes.append(padded_nodes * padded_mask.astype(np.int64))
        path_mask.append(padded_mask)
        row += h.shape[0]
        col += h.shape[1]
    path_mask = np.concatenate(path_mask)
    return GraphBatch(
        num_nodes=num_nodes,
        incidence=incidence,
        edge_kinds=np.concatenate(kinds),
        path_nodes=np.concatenate(path_nodes),
        path_mask=path_mask,
        path_lengths=path_mask.sum(axis=1).astype(np.int64),
    )


def single_batch(hypergraph: Hypergraph, paths: PathSet) -> GraphBatch:
    """Batch view of one hypergraph/path set pair, e.g. for hand-built graphs."""
    nodes, mask, lengths = paths.padded()
    return GraphBatch(
        num_nodes=hypergraph.num_nodes,
        incidence=hypergraph.incidence,
        edge_kinds=hypergraph.edge_kinds,
        path_nodes=nodes,
        path_mask=mask,
        path_lengths=lengths,
    )

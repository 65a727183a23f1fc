"""Seeded planted-motif graph generators used as verification oracles.

Every generated graph carries one planted motif (the class-determining
structure) in front of a random background: motif nodes occupy indices
[0, motif_size), background nodes follow. Background pairs, and pairs
linking motif to background, appear independently with the configured
edge probability; whenever that probability is positive one connector
edge between motif and background is guaranteed. Node features are a
one-hot encoding of the capped node degree plus optional Gaussian
jitter (`noise`); all nodes share discrete label 0 so kernel
comparisons see structure only. Generation is a pure function of the
seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Dataset, Graph

MOTIF_EDGES: dict[str, tuple[tuple[int, int], ...]] = {
    "triangle-clique": ((0, 1), (0, 2), (1, 2)),
    "house": ((0, 1), (1, 2), (2, 3), (0, 3), (2, 4), (3, 4)),
    "star": ((0, 1), (0, 2), (0, 3), (0, 4)),
}

MOTIF_KINDS = tuple(MOTIF_EDGES)


def motif_size(kind: str) -> int:
    return 1 + max(max(e) for e in MOTIF_EDGES[kind])


@dataclass(frozen=True)
class MotifSpec:
    kind: str
    background_nodes: int
    background_edge_prob: float
    noise: float = 0.0

    def __post_init__(self):
        if self.kind not in MOTIF_EDGES:
            raise ValueError(f"unknown motif kind {self.kind!r}; choose from {MOTIF_KINDS}")
        if self.background_nodes < 0:
            raise ValueError("background_nodes must be non-negative")
        if not 0.0 <= self.background_edge_prob <= 1.0:
            raise ValueError("background_edge_prob must be in [0, 1]")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")


@dataclass(frozen=True)
class MotifGroundTruth:
    motif_nodes: tuple[int, ...]
    motif_edges: tuple[tuple[int, int], ...]


def _generate_graph(
    spec: MotifSpec, class_label: int, rng: np.random.Generator, feature_dim: int
) -> tuple[Graph, MotifGroundTruth]:
    m = motif_size(spec.kind)
    n = m + spec.background_nodes
    edges = list(MOTIF_EDGES[spec.kind])
    if spec.background_nodes > 0 and spec.background_edge_prob > 0.0:
        anchor = int(rng.integers(0, m))
        target = m + int(rng.integers(0, spec.background_nodes))
        edges.append((anchor, target))
        for u in range(n):
            for v in range(u + 1, n):
                if v < m:
                    continue  # motif-internal pairs are fixed by the motif
                if rng.random() < spec.background_edge_prob:
                    edges.append((u, v))
    # One-hot of the capped node degree: purely structural, no motif tag.
    # Discrete labels stay uniform so kernel comparisons are insensitive to
    # background-density shifts between domains.
    degree = np.zeros(n, dtype=int)
    for u, v in set((min(e), max(e)) for e in edges):
        degree[u] += 1
        degree[v] += 1
    features = np.zeros((n, feature_dim))
    features[np.arange(n), np.minimum(degree, feature_dim - 1)] = 1.0
    if spec.noise > 0.0:
        features = features + spec.noise * rng.normal(size=(n, feature_dim))
    graph = Graph(n, edges, features, node_labels=[0] * n, class_label=class_label)
    truth = MotifGroundTruth(tuple(range(m)), MOTIF_EDGES[spec.kind])
    return graph, truth


def generate_planted_motif_dataset(
    spec_pos: MotifSpec,
    spec_neg: MotifSpec,
    n_per_class: int,
    seed: int,
    feature_dim: int = 4,
    name: str = "planted-motif",
) -> tuple[Dataset, list[MotifGroundTruth]]:
    """Two-class dataset: class 1 carries spec_pos's motif, class 0 spec_neg's.

    Returns the dataset together with the per-graph ground-truth motif node
    and edge sets (same order as the graphs). Each graph draws from its own
    substream keyed by (seed, class, index).
    """
    if spec_pos.kind == spec_neg.kind:
        raise ValueError("positive and negative specs must use different motif kinds")
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    graphs: list[Graph] = []
    truths: list[MotifGroundTruth] = []
    for class_label, spec in ((0, spec_neg), (1, spec_pos)):
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, class_label, i])
            g, t = _generate_graph(spec, class_label, rng, feature_dim)
            graphs.append(g)
            truths.append(t)
    return Dataset(graphs, num_classes=2, name=name), truths


def jaccard(a, b) -> float:
    """Jaccard overlap of two index collections (1.0 when both are empty)."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


@dataclass(frozen=True)
class PropertyTask:
    """One binary property-prediction task over planted motifs."""

    name: str
    positive_motif: str
    negative_motif: str
    dataset: Dataset
    truths: tuple[MotifGroundTruth, ...]


def generate_property_tasks(
    pairs: list[tuple[str, str]],
    n_per_class: int,
    background_nodes: int,
    background_edge_prob: float,
    seed: int,
    noise: float = 0.0,
    feature_dim: int = 4,
) -> list[PropertyTask]:
    """One planted-motif task per (positive, negative) motif pair.

    Task t draws from substreams keyed by (seed, t) so adding or removing
    tasks never perturbs the others.
    """
    tasks = []
    for t, (pos, neg) in enumerate(pairs):
        spec_pos = MotifSpec(pos, background_nodes, background_edge_prob, noise)
        spec_neg = MotifSpec(neg, background_nodes, background_edge_prob, noise)
        task_seed = int(np.random.default_rng([seed, t]).integers(0, 2**31 - 1))
        ds, truths = generate_planted_motif_dataset(
            spec_pos,
            spec_neg,
            n_per_class,
            task_seed,
            feature_dim,
            name=f"{pos}-vs-{neg}",
        )
        tasks.append(PropertyTask(ds.name, pos, neg, ds, tuple(truths)))
    return tasks

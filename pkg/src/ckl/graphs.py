"""Immutable attributed graphs and dataset containers.

Graphs are undirected and simple: edges are stored once as (u, v) with
u < v, deduplicated, with no self-loops. Node features are a dense
float64 matrix with one row per node; the feature dimension is constant
across a dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    node_features: np.ndarray
    node_labels: tuple[int, ...] | None = None
    class_label: int | None = None

    def __init__(self, num_nodes, edges, node_features, node_labels=None, class_label=None):
        num_nodes = int(num_nodes)
        if num_nodes < 0:
            raise ValueError("num_nodes must be non-negative")
        normalized = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValueError(f"edge ({u}, {v}) out of range for {num_nodes} nodes")
            normalized.add((u, v) if u < v else (v, u))
        feats = np.asarray(node_features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != num_nodes:
            raise ValueError(
                f"node_features must be [{num_nodes} x F], got shape {feats.shape}"
            )
        feats = feats.copy()
        feats.flags.writeable = False
        if node_labels is not None:
            node_labels = tuple(int(x) for x in node_labels)
            if len(node_labels) != num_nodes:
                raise ValueError("node_labels length must equal num_nodes")
            if any(x < 0 for x in node_labels):
                raise ValueError("node_labels must be non-negative")
        object.__setattr__(self, "num_nodes", num_nodes)
        object.__setattr__(self, "edges", tuple(sorted(normalized)))
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "node_labels", node_labels)
        object.__setattr__(
            self, "class_label", None if class_label is None else int(class_label)
        )

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Neighbor lists, cached after the first call."""
        cached = self.__dict__.get("_adjacency")
        if cached is None:
            lists: list[list[int]] = [[] for _ in range(self.num_nodes)]
            for u, v in self.edges:
                lists[u].append(v)
                lists[v].append(u)
            cached = tuple(tuple(sorted(ns)) for ns in lists)
            object.__setattr__(self, "_adjacency", cached)
        return cached

    def edge_density(self) -> float:
        if self.num_nodes <= 1:
            return 0.0
        return self.num_edges / (self.num_nodes * (self.num_nodes - 1) / 2.0)

    def relabeled(self, perm: list[int] | tuple[int, ...]) -> "Graph":
        """New graph with node i renamed to perm[i] (a permutation)."""
        if sorted(perm) != list(range(self.num_nodes)):
            raise ValueError("perm must be a permutation of the node indices")
        inverse = [0] * self.num_nodes
        for old, new in enumerate(perm):
            inverse[new] = old
        feats = self.node_features[inverse]
        labels = None
        if self.node_labels is not None:
            labels = tuple(self.node_labels[i] for i in inverse)
        edges = [(perm[u], perm[v]) for u, v in self.edges]
        return Graph(self.num_nodes, edges, feats, labels, self.class_label)


@dataclass(frozen=True, eq=False)
class Dataset:
    graphs: tuple[Graph, ...]
    num_classes: int
    feature_dim: int
    name: str = ""

    def __init__(self, graphs, num_classes, feature_dim=None, name=""):
        graphs = tuple(graphs)
        num_classes = int(num_classes)
        if feature_dim is None:
            if not graphs:
                raise ValueError("feature_dim is required for an empty dataset")
            feature_dim = graphs[0].feature_dim
        feature_dim = int(feature_dim)
        for i, g in enumerate(graphs):
            if g.feature_dim != feature_dim:
                raise ValueError(
                    f"graph {i} has feature dim {g.feature_dim}, expected {feature_dim}"
                )
            if g.class_label is not None and not (0 <= g.class_label < num_classes):
                raise ValueError(
                    f"graph {i} has class label {g.class_label} outside [0, {num_classes})"
                )
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "num_classes", num_classes)
        object.__setattr__(self, "feature_dim", feature_dim)
        object.__setattr__(self, "name", str(name))

    def __len__(self) -> int:
        return len(self.graphs)

    def labels(self) -> list[int | None]:
        return [g.class_label for g in self.graphs]


def graphs_equal(a: Graph, b: Graph) -> bool:
    return (
        a.num_nodes == b.num_nodes
        and a.edges == b.edges
        and np.array_equal(a.node_features, b.node_features)
        and a.node_labels == b.node_labels
        and a.class_label == b.class_label
    )


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    return (
        len(a) == len(b)
        and a.num_classes == b.num_classes
        and a.feature_dim == b.feature_dim
        and all(graphs_equal(x, y) for x, y in zip(a.graphs, b.graphs))
    )


def edge_density_partition(ds: Dataset, k: int = 4) -> list[Dataset]:
    """Split a dataset into k contiguous buckets of ascending edge density.

    Graphs are ordered by (density, original index); bucket sizes differ by
    at most one, with earlier buckets taking the remainder.
    """
    if len(ds) == 0:
        raise ValueError("cannot partition an empty dataset")
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(ds):
        raise ValueError(f"k={k} exceeds dataset size {len(ds)}")
    order = sorted(range(len(ds)), key=lambda i: (ds.graphs[i].edge_density(), i))
    base, rem = divmod(len(ds), k)
    buckets: list[Dataset] = []
    start = 0
    for b in range(k):
        size = base + (1 if b < rem else 0)
        chunk = [ds.graphs[i] for i in order[start : start + size]]
        buckets.append(
            Dataset(chunk, ds.num_classes, ds.feature_dim, f"{ds.name}[{b}]")
        )
        start += size
    return buckets

"""Weisfeiler-Lehman subtree kernel with a brute-force verification oracle.

Relabeling replaces each node's label with a dictionary id for the pair
(own label, sorted multiset of neighbor labels). The dictionary must be
shared across every graph that will be compared, otherwise equal local
structures in different corpora would receive unrelated ids and all
cross matches would vanish.

The kernel value at depth l is sum_{i=0..l} of the number of node pairs
whose iteration-i labels agree, computed as a dot product of label-count
histograms. The brute-force oracle recomputes the same quantity from
explicit rooted subtree patterns without any dictionary, which makes it
an independent check.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import Graph
from .mask import CoreSubgraph


@dataclass
class LabelDictionary:
    """Corpus-shared injective mapping from structure keys to integer ids."""

    _ids: dict = field(default_factory=dict)

    def id_for(self, key) -> int:
        if key not in self._ids:
            self._ids[key] = len(self._ids)
        return self._ids[key]

    def __len__(self) -> int:
        return len(self._ids)


@dataclass(frozen=True)
class LabeledGraph:
    num_nodes: int
    adjacency: tuple[tuple[int, ...], ...]
    labels: tuple[tuple[int, ...], ...]  # labels[i] = iteration-i label per node

    @property
    def iterations(self) -> int:
        return len(self.labels) - 1


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray  # [num_targets, num_sources]
    depth: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("kernel matrix must be 2-D")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("kernel entries must be finite and non-negative")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def initial_labels(graph: Graph, dictionary: LabelDictionary) -> tuple[int, ...]:
    """Discrete node labels when present, else hashed feature rows.

    Feature rows are rounded to 6 decimals before keying the shared
    dictionary, so equal rows across graphs share an id.
    """
    if graph.node_labels is not None:
        return tuple(graph.node_labels)
    keys = [tuple(round(float(x), 6) for x in row) for row in graph.node_features]
    return tuple(dictionary.id_for(("feat", k)) for k in keys)


def labeled_graph(graph: Graph, dictionary: LabelDictionary) -> LabeledGraph:
    return LabeledGraph(
        graph.num_nodes, graph.adjacency(), (initial_labels(graph, dictionary),)
    )


def core_labeled_graph(graph: Graph, core: CoreSubgraph, dictionary: LabelDictionary) -> LabeledGraph:
    """Labeled view of a core subgraph, reindexed to its kept nodes."""
    base = initial_labels(graph, dictionary)
    index = {v: i for i, v in enumerate(core.kept_nodes)}
    adj: list[list[int]] = [[] for _ in core.kept_nodes]
    for u, v in core.kept_edges:
        adj[index[u]].append(index[v])
        adj[index[v]].append(index[u])
    return LabeledGraph(
        len(core.kept_nodes),
        tuple(tuple(sorted(ns)) for ns in adj),
        (tuple(base[v] for v in core.kept_nodes),),
    )


def wl_relabel(lg: LabeledGraph, iterations: int, dictionary: LabelDictionary) -> LabeledGraph:
    """Extend a labeled graph with `iterations` additional refinement rounds."""
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    labels = list(lg.labels)
    for _ in range(iterations):
        prev = labels[-1]
        nxt = tuple(
            dictionary.id_for((prev[v], tuple(sorted(prev[u] for u in lg.adjacency[v]))))
            for v in range(lg.num_nodes)
        )
        labels.append(nxt)
    return LabeledGraph(lg.num_nodes, lg.adjacency, tuple(labels))


def wl_kernel(g1: LabeledGraph, g2: LabeledGraph, depth: int) -> float:
    """Sum over iterations 0..depth of matching-label node-pair counts."""
    if depth > g1.iterations or depth > g2.iterations:
        raise ValueError(
            f"depth {depth} exceeds available iterations "
            f"({g1.iterations}, {g2.iterations})"
        )
    total = 0
    for i in range(depth + 1):
        h1 = Counter(g1.labels[i])
        h2 = Counter(g2.labels[i])
        total += sum(count * h2.get(lab, 0) for lab, count in h1.items())
    return float(total)


def kernel_matrix(
    targets: list[LabeledGraph],
    sources: list[LabeledGraph],
    depth: int,
    threads: int = 1,
) -> KernelMatrix:
    """Pairwise kernel values, entry (j, i) = k(target_j, source_i)."""
    if not targets or not sources:
        raise ValueError("kernel matrix needs non-empty target and source corpora")

    def row(j: int) -> list[float]:
        return [wl_kernel(targets[j], s, depth) for s in sources]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(len(targets))))
    else:
        rows = [row(j) for j in range(len(targets))]
    return KernelMatrix(np.asarray(rows, dtype=np.float64), depth)


def relabel_corpus(
    graphs: list[LabeledGraph], depth: int, dictionary: LabelDictionary
) -> list[LabeledGraph]:
    return [wl_relabel(g, depth, dictionary) for g in graphs]


def _subtree_pattern(lg: LabeledGraph, v: int, depth: int):
    if depth == 0:
        return lg.labels[0][v]
    inner = _subtree_pattern(lg, v, depth - 1)
    children = tuple(sorted(_subtree_pattern(lg, u, depth - 1) for u in lg.adjacency[v]))
    return (inner, children)


def brute_force_subtree_kernel(g1: LabeledGraph, g2: LabeledGraph, depth: int) -> float:
    """Oracle: explicit rooted-subtree pattern comparison for small graphs.

    Limited to graphs of at most 8 nodes and depth at most 2; must agree
    exactly with wl_kernel.
    """
    if g1.num_nodes > 8 or g2.num_nodes > 8:
        raise ValueError("oracle is limited to graphs with at most 8 nodes")
    if depth > 2:
        raise ValueError("oracle is limited to depth at most 2")
    total = 0
    for i in range(depth + 1):
        left = [_subtree_pattern(g1, v, i) for v in range(g1.num_nodes)]
        right = [_subtree_pattern(g2, v, i) for v in range(g2.num_nodes)]
        counts = Counter(right)
        total += sum(counts.get(pat, 0) for pat in left)
    return float(total)


def write_kernel_csv(path: str | Path, km: KernelMatrix) -> None:
    """CSV export with header rows naming source and target indices."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target\\source"] + [f"s{i}" for i in range(km.values.shape[1])])
        for j, row in enumerate(km.values):
            writer.writerow([f"t{j}"] + [repr(float(x)) for x in row])

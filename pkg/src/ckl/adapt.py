"""Label transfer from source to target graphs via core-subgraph similarity.

Each target graph receives the label of its most similar source graph
under the WL subtree kernel computed on extracted core subgraphs. Ties
break toward the smallest source index. Empty cores fall back to the
full graph and are counted, never silently absorbed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import ClassifierParams, EncoderParams
from .graphs import Dataset, Graph
from .mask import CoreSubgraph, MaskParams, extract_core_subgraph
from .wl import (
    KernelMatrix,
    LabelDictionary,
    core_labeled_graph,
    kernel_matrix,
    labeled_graph,
    relabel_corpus,
)


@dataclass(frozen=True)
class TargetAssignment:
    target_index: int
    assigned_label: int
    best_source: int
    kernel_value: float
    fallback: bool


@dataclass(frozen=True)
class AdaptationResult:
    assignments: tuple[TargetAssignment, ...]
    accuracy: float | None
    fallback_count: int

    def predicted_labels(self) -> list[int]:
        return [a.assigned_label for a in self.assignments]


def evaluate_accuracy(pred: list[int], truth: list[int]) -> float:
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(truth)} labels")
    if not pred:
        raise ValueError("cannot score empty label lists")
    return sum(p == t for p, t in zip(pred, truth)) / len(pred)


def assign_labels(
    km: KernelMatrix,
    source_labels: list[int],
    fallbacks: list[bool] | None = None,
) -> AdaptationResult:
    """argmax over sources per target row, ties to the smallest index."""
    if len(source_labels) == 0:
        raise ValueError("need at least one labeled source graph")
    if km.values.shape[1] != len(source_labels):
        raise ValueError(
            f"kernel matrix has {km.values.shape[1]} source columns "
            f"for {len(source_labels)} labels"
        )
    if fallbacks is None:
        fallbacks = [False] * km.values.shape[0]
    assignments = []
    for j, row in enumerate(km.values):
        best = int(np.argmax(row))  # argmax returns the first maximum
        assignments.append(
            TargetAssignment(j, int(source_labels[best]), best, float(row[best]), fallbacks[j])
        )
    return AdaptationResult(tuple(assignments), None, sum(fallbacks))


def _core_or_fallback(graph: Graph, core: CoreSubgraph) -> tuple[CoreSubgraph, bool]:
    if not core.is_empty:
        return core, False
    whole = CoreSubgraph(
        tuple(range(graph.num_nodes)), graph.edges, core.node_threshold, core.edge_threshold
    )
    return whole, True


def adapt_pipeline(
    source: Dataset,
    target: Dataset,
    enc: EncoderParams,
    clf: ClassifierParams,
    mp: MaskParams,
    depth: int,
    node_threshold: float = 0.5,
    edge_threshold: float = 0.5,
    threads: int = 1,
) -> tuple[AdaptationResult, KernelMatrix]:
    """Extract cores on both domains, compare with one shared WL dictionary,
    and transfer the best-matching source labels to the targets.

    Accuracy is reported only when every target graph carries a label for
    evaluation.
    """
    dictionary = LabelDictionary()
    source_views = []
    for g in source.graphs:
        core, _ = _core_or_fallback(
            g, extract_core_subgraph(g, enc, mp, node_threshold, edge_threshold)
        )
        source_views.append(core_labeled_graph(g, core, dictionary))
    target_views = []
    fallbacks = []
    for g in target.graphs:
        core, fell_back = _core_or_fallback(
            g, extract_core_subgraph(g, enc, mp, node_threshold, edge_threshold)
        )
        fallbacks.append(fell_back)
        target_views.append(core_labeled_graph(g, core, dictionary))

    source_views = relabel_corpus(source_views, depth, dictionary)
    target_views = relabel_corpus(target_views, depth, dictionary)
    km = kernel_matrix(target_views, source_views, depth, threads=threads)

    source_labels = [g.class_label for g in source.graphs]
    if any(lab is None for lab in source_labels):
        raise ValueError("every source graph must be labeled")
    result = assign_labels(km, source_labels, fallbacks)

    accuracy = None
    target_labels = [g.class_label for g in target.graphs]
    if all(lab is not None for lab in target_labels):
        accuracy = evaluate_accuracy(result.predicted_labels(), target_labels)
    return (
        AdaptationResult(result.assignments, accuracy, result.fallback_count),
        km,
    )


def write_adaptation_csv(path: str | Path, result: AdaptationResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["target_index", "assigned_label", "best_source", "kernel_value", "fallback_flag"]
        )
        for a in result.assignments:
            writer.writerow(
                [a.target_index, a.assigned_label, a.best_source, repr(a.kernel_value), int(a.fallback)]
            )


def full_graph_labeled_views(ds: Dataset, dictionary: LabelDictionary):
    return [labeled_graph(g, dictionary) for g in ds.graphs]

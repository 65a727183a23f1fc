"""GIN message passing, sum readout, and the MLP classifier head.

A layer computes MLP((1 + eps) * m_v * h_v + sum_{u in N(v)} m_uv * m_u * h_u)
with eps fixed at 0; absent masks behave as all-ones. Node masks are
column vectors [n, 1], edge masks [E, 1] with one entry per undirected
edge applied to both message directions. Aggregation runs through
constant 0/1 incidence matrices cached per graph, so the whole forward
pass stays inside the differentiable primitive set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, clamp_min, concat, log, matmul, mul, relu, softmax_row
from .graphs import Graph


@dataclass
class Mlp:
    """Fully connected stack; ReLU between layers, none after the last."""

    weights: list
    biases: list


def init_mlp(
    dims: list[int],
    rng: np.random.Generator,
    zero_last: bool = False,
    scale: float = 0.5,
) -> Mlp:
    """Seeded normal init with std scale/sqrt(fan_in); zero_last keeps the
    final layer at zero so heads start unbiased (the sum readout otherwise
    saturates the softmax at initialization)."""
    weights, biases = [], []
    last = len(dims) - 2
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        if zero_last and i == last:
            weights.append(np.zeros((d_in, d_out)))
        else:
            weights.append(rng.normal(0.0, scale / np.sqrt(d_in), size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return Mlp(weights, biases)


def mlp_forward(mlp: Mlp, x):
    h = as_tensor(x)
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = matmul(h, as_tensor(w)) + as_tensor(b)
        if i != last:
            h = relu(h)
    return h


@dataclass
class EncoderParams:
    """Per-layer GIN combine MLPs; eps is the self-weight offset (fixed 0)."""

    layers: list
    eps: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        if not self.eps:
            self.eps = [0.0] * len(self.layers)
        if len(self.eps) != len(self.layers):
            raise ValueError("eps must have one entry per layer")


@dataclass
class ClassifierParams:
    mlp: Mlp


def init_encoder(
    feature_dim: int, hidden: int, num_layers: int, rng: np.random.Generator
) -> EncoderParams:
    layers = []
    d_in = feature_dim
    for _ in range(num_layers):
        layers.append(init_mlp([d_in, hidden, hidden], rng))
        d_in = hidden
    return EncoderParams(layers)


def init_classifier(
    hidden: int, num_classes: int, rng: np.random.Generator
) -> ClassifierParams:
    return ClassifierParams(init_mlp([hidden, hidden, num_classes], rng))


@dataclass(frozen=True)
class GraphOperators:
    """Constant selector matrices for one graph's message passing."""

    edge_src: np.ndarray  # [E, n] one-hot rows selecting edge sources (u of u<v)
    edge_tgt: np.ndarray  # [E, n] one-hot rows selecting edge targets
    arc_src: np.ndarray  # [2E, n] sources of both directed copies
    arc_tgt_t: np.ndarray  # [n, 2E] transpose of target one-hots (scatter-add)


def operators(graph: Graph) -> GraphOperators:
    cached = graph.__dict__.get("_operators")
    if cached is not None:
        return cached
    n, e = graph.num_nodes, graph.num_edges
    edge_src = np.zeros((e, n))
    edge_tgt = np.zeros((e, n))
    arc_src = np.zeros((2 * e, n))
    arc_tgt = np.zeros((2 * e, n))
    for i, (u, v) in enumerate(graph.edges):
        edge_src[i, u] = 1.0
        edge_tgt[i, v] = 1.0
        arc_src[i, u] = 1.0
        arc_tgt[i, v] = 1.0
        arc_src[e + i, v] = 1.0
        arc_tgt[e + i, u] = 1.0
    ops = GraphOperators(edge_src, edge_tgt, arc_src, arc_tgt.T.copy())
    object.__setattr__(graph, "_operators", ops)
    return ops


def gin_layer_forward(h, graph: Graph, layer: Mlp, eps: float = 0.0, node_mask=None, edge_mask=None):
    """One GIN layer over node matrix h [n, d]; masks scale nodes/messages."""
    h = as_tensor(h)
    if h.shape[0] != graph.num_nodes:
        raise ValueError(f"node matrix has {h.shape[0]} rows for {graph.num_nodes} nodes")
    hm = h if node_mask is None else mul(as_tensor(node_mask), h)
    self_term = hm if eps == 0.0 else mul(1.0 + eps, hm)
    if graph.num_edges == 0:
        return mlp_forward(layer, self_term)
    ops = operators(graph)
    messages = matmul(as_tensor(ops.arc_src), hm)
    if edge_mask is not None:
        em = as_tensor(edge_mask)
        arc_mask = concat([em, em], axis=0)
        messages = mul(arc_mask, messages)
    aggregated = matmul(as_tensor(ops.arc_tgt_t), messages)
    return mlp_forward(layer, self_term + aggregated)


def encode(graph: Graph, enc: EncoderParams, node_mask=None, edge_mask=None):
    """Run all GIN layers over the graph's features; returns h_final [n, H]."""
    h = as_tensor(graph.node_features)
    for layer, eps in zip(enc.layers, enc.eps):
        h = gin_layer_forward(h, graph, layer, eps, node_mask, edge_mask)
    return h


def readout(h_final, node_mask=None):
    """Masked sum over nodes; returns the graph embedding as a 1-D vector."""
    h = as_tensor(h_final)
    if h.shape[0] == 0:
        raise ValueError("readout needs at least one node")
    if node_mask is not None:
        h = mul(as_tensor(node_mask), h)
    return h.sum(axis=0)


def classify(z, clf: ClassifierParams):
    """Class distribution from a graph embedding."""
    return softmax_row(mlp_forward(clf.mlp, z))


def cross_entropy(probs, y: int):
    """-log p[y] with the log argument clamped at 1e-12."""
    p = as_tensor(probs)
    n_classes = p.shape[-1]
    if not 0 <= y < n_classes:
        raise ValueError(f"class index {y} outside [0, {n_classes})")
    onehot = np.zeros(n_classes)
    onehot[y] = 1.0
    return -mul(onehot, log(clamp_min(p, 1e-12))).sum()


def predict(graph: Graph, enc: EncoderParams, clf: ClassifierParams, node_mask=None, edge_mask=None):
    """Class distribution for one graph, optionally under soft masks."""
    h = encode(graph, enc, node_mask, edge_mask)
    return classify(readout(h, node_mask), clf)


def predicted_class(graph: Graph, enc: EncoderParams, clf: ClassifierParams) -> int:
    return int(np.argmax(predict(graph, enc, clf).data))


def accuracy(ds, enc: EncoderParams, clf: ClassifierParams) -> float:
    """Fraction of graphs whose argmax prediction matches their label."""
    hits = sum(
        1 for g in ds.graphs if predicted_class(g, enc, clf) == g.class_label
    )
    return hits / len(ds.graphs)

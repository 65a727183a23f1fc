"""Learned node/edge selection that extracts a prediction-preserving core.

Node and edge keep-probabilities come from small heads on top of the
frozen encoder's node embeddings. Training samples relaxed binary masks
(logistic noise, temperature t) and minimizes the soft cross-entropy
between the frozen model's prediction on the full graph and its
prediction on the masked graph, averaged over a fixed set of Monte Carlo
noise draws. Thresholding the noise-free probabilities yields a discrete
core subgraph.

The relaxation keeps the printed form m = sigmoid(logit(p) / t + logit(u)):
the temperature scales only the probability term, and the noise u enters
as a constant, so gradients flow through the probabilities alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, abs_, as_tensor, backward, clamp_min, concat, log, matmul, mul, sigmoid
from .encoder import (
    ClassifierParams,
    EncoderParams,
    Mlp,
    classify,
    encode,
    init_mlp,
    mlp_forward,
    operators,
    predict,
    readout,
)
from .graphs import Dataset, Graph
from .params import gradient_step, lift, to_arrays, tree_leaves

PROB_EPS = 1e-6


@dataclass
class MaskParams:
    """Selection networks: embeddings, scalar logit heads, temperature."""

    node_mlp: Mlp
    edge_mlp: Mlp
    node_head: Mlp
    edge_head: Mlp
    temperature: float

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class MaskSample:
    """One draw of relaxed masks plus the frozen noise that produced it."""

    node_masks: np.ndarray  # [n, 1], strictly inside (0, 1)
    edge_masks: np.ndarray  # [E, 1]
    node_noise: np.ndarray
    edge_noise: np.ndarray


@dataclass(frozen=True)
class CoreSubgraph:
    kept_nodes: tuple[int, ...]
    kept_edges: tuple[tuple[int, int], ...]
    node_threshold: float
    edge_threshold: float

    def __post_init__(self):
        kept = set(self.kept_nodes)
        for u, v in self.kept_edges:
            if u not in kept or v not in kept:
                raise ValueError(f"kept edge ({u}, {v}) has a dropped endpoint")

    @property
    def is_empty(self) -> bool:
        return not self.kept_nodes


def init_mask_params(
    hidden: int, mask_hidden: int, temperature: float, rng: np.random.Generator
) -> MaskParams:
    """Heads start at zero, so every keep probability begins at exactly 0.5."""
    return MaskParams(
        node_mlp=init_mlp([hidden, mask_hidden, mask_hidden], rng),
        edge_mlp=init_mlp([hidden, mask_hidden, mask_hidden], rng),
        node_head=init_mlp([mask_hidden, 1], rng, zero_last=True),
        edge_head=init_mlp([3 * mask_hidden, 1], rng, zero_last=True),
        temperature=temperature,
    )


def embed_nodes_edges(graph: Graph, enc: EncoderParams, mp: MaskParams):
    """Node and edge embeddings in the selection feature space.

    Edges have no native features here, so the edge input is the mean of
    the two endpoint node embeddings from the unmasked encoder.
    """
    h = encode(graph, enc)
    e_nodes = mlp_forward(mp.node_mlp, h)
    ops = operators(graph)
    edge_inputs = mul(0.5, matmul(as_tensor(ops.edge_src), h) + matmul(as_tensor(ops.edge_tgt), h))
    e_edges = mlp_forward(mp.edge_mlp, edge_inputs)
    return e_nodes, e_edges


def _squash(logits):
    """Sigmoid squashed into [PROB_EPS, 1 - PROB_EPS]."""
    return PROB_EPS + mul(1.0 - 2.0 * PROB_EPS, sigmoid(logits))


def node_probability(e_nodes, mp: MaskParams):
    """Per-node keep probability, shape [n, 1]."""
    return _squash(mlp_forward(mp.node_head, e_nodes))


def edge_probability(e_nodes, e_edges, graph: Graph, mp: MaskParams):
    """Per-edge keep probability, shape [E, 1], symmetric in the endpoints.

    The fusion input is concat(E_i + E_j, |E_i - E_j|, E_ij) so both edge
    orientations produce the same logit.
    """
    ops = operators(graph)
    e_i = matmul(as_tensor(ops.edge_src), e_nodes)
    e_j = matmul(as_tensor(ops.edge_tgt), e_nodes)
    fusion = concat([e_i + e_j, abs_(e_i - e_j), e_edges], axis=1)
    return _squash(mlp_forward(mp.edge_head, fusion))


def sample_mask(p, temperature: float, u):
    """Relaxed Bernoulli draw, differentiable in p with u held fixed."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("noise draws must lie strictly inside (0, 1)")
    p = as_tensor(p)
    logit_p = log(p) - log(1.0 - p)
    logit_u = np.log(u) - np.log(1.0 - u)
    return sigmoid(mul(1.0 / temperature, logit_p) + logit_u)


def soft_masks(graph: Graph, enc: EncoderParams, mp: MaskParams):
    """Noise-free expected keep probabilities (p_nodes [n,1], p_edges [E,1])."""
    e_nodes, e_edges = embed_nodes_edges(graph, enc, mp)
    return node_probability(e_nodes, mp), edge_probability(e_nodes, e_edges, graph, mp)


def draw_noise(graph: Graph, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    u_nodes = np.clip(rng.random((graph.num_nodes, 1)), 1e-12, 1.0 - 1e-12)
    u_edges = np.clip(rng.random((graph.num_edges, 1)), 1e-12, 1.0 - 1e-12)
    return u_nodes, u_edges


def sample_masks(graph: Graph, enc: EncoderParams, mp: MaskParams, rng: np.random.Generator) -> MaskSample:
    """One concrete mask draw with its noise, detached from the trace."""
    p_nodes, p_edges = soft_masks(graph, enc, mp)
    u_nodes, u_edges = draw_noise(graph, rng)
    m_nodes = sample_mask(p_nodes, mp.temperature, u_nodes)
    m_edges = sample_mask(p_edges, mp.temperature, u_edges)
    return MaskSample(np.array(m_nodes.data), np.array(m_edges.data), u_nodes, u_edges)


def masked_prediction(graph: Graph, enc: EncoderParams, clf: ClassifierParams, node_mask, edge_mask):
    h = encode(graph, enc, node_mask, edge_mask)
    return classify(readout(h, node_mask), clf)


def expected_prediction(graph: Graph, enc: EncoderParams, clf: ClassifierParams, mp: MaskParams):
    """Prediction under the noise-free expected masks."""
    p_nodes, p_edges = soft_masks(graph, enc, mp)
    return masked_prediction(graph, enc, clf, p_nodes, p_edges)


def mask_objective(
    graph: Graph,
    enc: EncoderParams,
    clf: ClassifierParams,
    mp: MaskParams,
    mc_samples: int,
    rng: np.random.Generator,
    target: np.ndarray | None = None,
    pin_masks: float | None = None,
):
    """Monte Carlo soft cross-entropy between full-graph and masked predictions.

    loss = -(1/K) sum_k sum_c P(c | full graph) * log P(c | k-th masked graph).
    The full-graph distribution is a constant target (pass a precomputed one
    to skip recomputation); gradients reach only whatever parameters were
    lifted, normally the mask parameters. `pin_masks` overrides every mask
    with a constant, which is how the all-ones identity is exercised.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be at least 1")
    if target is None:
        target = np.array(predict(graph, to_arrays(enc), to_arrays(clf)).data)
    target = np.asarray(target, dtype=np.float64)

    if pin_masks is None:
        p_nodes, p_edges = soft_masks(graph, enc, mp)
    total = None
    for _ in range(mc_samples):
        if pin_masks is not None:
            node_mask = np.full((graph.num_nodes, 1), float(pin_masks))
            edge_mask = np.full((graph.num_edges, 1), float(pin_masks))
        else:
            u_nodes, u_edges = draw_noise(graph, rng)
            node_mask = sample_mask(p_nodes, mp.temperature, u_nodes)
            edge_mask = sample_mask(p_edges, mp.temperature, u_edges)
        p_sub = masked_prediction(graph, enc, clf, node_mask, edge_mask)
        term = -mul(target, log(clamp_min(p_sub, 1e-12))).sum()
        total = term if total is None else total + term
    return mul(1.0 / mc_samples, total)


def frozen_targets_for(graph: Graph, enc: EncoderParams, clf: ClassifierParams) -> np.ndarray:
    """Full-graph soft prediction of the frozen model, detached."""
    return np.array(predict(graph, to_arrays(enc), to_arrays(clf)).data)


def frozen_targets(ds: Dataset, enc: EncoderParams, clf: ClassifierParams) -> list[np.ndarray]:
    """Full-graph soft predictions of the frozen model, one per graph."""
    return [frozen_targets_for(g, enc, clf) for g in ds.graphs]


def train_mask(
    ds: Dataset,
    enc: EncoderParams,
    clf: ClassifierParams,
    mp: MaskParams,
    epochs: int,
    lr: float,
    mc_samples: int,
    seed: int,
) -> tuple[MaskParams, list[float]]:
    """Gradient descent on the mean mask objective over the dataset.

    The encoder and classifier stay frozen. Noise streams derive from
    (seed, graph index) and restart every epoch, so the optimized objective
    is a fixed sample average and the run is fully deterministic. Returns
    the parameters of the best epoch together with the per-epoch loss trace.
    """
    targets = frozen_targets(ds, enc, clf)
    trace: list[float] = []
    best_loss = np.inf
    best = to_arrays(mp)
    current = to_arrays(mp)
    for epoch in range(epochs):
        lifted = lift(current)
        total = None
        for gi, g in enumerate(ds.graphs):
            rng = np.random.default_rng([seed, gi])
            loss_g = mask_objective(
                g, enc, clf, lifted, mc_samples, rng, target=targets[gi]
            )
            total = loss_g if total is None else total + loss_g
        loss = mul(1.0 / len(ds.graphs), total)
        value = float(loss.data)
        if not np.isfinite(value):
            raise ArithmeticError(f"non-finite mask loss at epoch {epoch}: {value}")
        trace.append(value)
        if value < best_loss:
            best_loss = value
            best = current
        if lr != 0.0:
            grads = backward(loss, tree_leaves(lifted))
            current = gradient_step(lifted, grads, lr)
        else:
            current = to_arrays(lifted)
    return best, trace


def extract_core_subgraph(
    graph: Graph,
    enc: EncoderParams,
    mp: MaskParams,
    node_threshold: float = 0.5,
    edge_threshold: float = 0.5,
) -> CoreSubgraph:
    """Threshold the expected keep probabilities into a discrete core.

    A node survives iff p_v >= node_threshold (ties kept); an edge survives
    iff p_e >= edge_threshold and both endpoints survived. Deterministic:
    no noise is drawn.
    """
    if not (0.0 < node_threshold < 1.0 and 0.0 < edge_threshold < 1.0):
        raise ValueError("thresholds must lie strictly in (0, 1)")
    p_nodes, p_edges = soft_masks(graph, enc, mp)
    pv = np.asarray(p_nodes.data).reshape(-1)
    pe = np.asarray(p_edges.data).reshape(-1)
    kept_nodes = tuple(v for v in range(graph.num_nodes) if pv[v] >= node_threshold)
    kept = set(kept_nodes)
    kept_edges = tuple(
        (u, v)
        for idx, (u, v) in enumerate(graph.edges)
        if pe[idx] >= edge_threshold and u in kept and v in kept
    )
    return CoreSubgraph(kept_nodes, kept_edges, node_threshold, edge_threshold)


def induced_graph(graph: Graph, core: CoreSubgraph) -> Graph | None:
    """Materialize the core as a standalone graph (None when empty)."""
    if core.is_empty:
        return None
    index = {v: i for i, v in enumerate(core.kept_nodes)}
    features = graph.node_features[list(core.kept_nodes)]
    labels = None
    if graph.node_labels is not None:
        labels = [graph.node_labels[v] for v in core.kept_nodes]
    edges = [(index[u], index[v]) for u, v in core.kept_edges]
    return Graph(len(core.kept_nodes), edges, features, labels, graph.class_label)


@dataclass(frozen=True)
class FidelityResult:
    agree: bool
    full_pred: int
    core_pred: int | None
    empty_core: bool


def fidelity(graph: Graph, core: CoreSubgraph, enc: EncoderParams, clf: ClassifierParams) -> FidelityResult:
    """Does the discretized core preserve the frozen model's argmax?"""
    full_pred = int(np.argmax(predict(graph, enc, clf).data))
    sub = induced_graph(graph, core)
    if sub is None:
        return FidelityResult(False, full_pred, None, True)
    core_pred = int(np.argmax(predict(sub, enc, clf).data))
    return FidelityResult(core_pred == full_pred, full_pred, core_pred, False)


def write_core_subgraph(path, core: CoreSubgraph) -> None:
    """Edge-list text export with a kept-node header."""
    lines = [
        "# kept-nodes: " + " ".join(str(v) for v in core.kept_nodes),
        f"# thresholds: node={core.node_threshold!r} edge={core.edge_threshold!r}",
    ]
    lines.extend(f"{u} {v}" for u, v in core.kept_edges)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

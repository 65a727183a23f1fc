"""Episodic 2-way K-shot learning over mask-selected core subgraphs.

The inner loop adapts the mask parameters to an episode's support set by
descending the prediction-matching objective; the outer loop updates the
shared encoder and classifier with a first-order gradient of the support
cross-entropy under the adapted masks (the dependence of the adapted
masks on the shared parameters is truncated, so no second-order terms
appear). Query sets are never trained on; they provide evaluation
metrics only. Every random choice derives from explicit integer seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import backward, mul
from .encoder import ClassifierParams, EncoderParams, cross_entropy
from .graphs import Dataset, Graph
from .mask import MaskParams, expected_prediction, frozen_targets_for, mask_objective
from .params import gradient_step, lift, to_arrays, tree_leaves
from .seeding import rng_from

VALIDATION_STREAM = 977_231  # offsets validation seeds away from training streams


@dataclass(frozen=True)
class TaskEpisode:
    task_id: int
    support: tuple[tuple[Graph, int], ...]
    query: tuple[tuple[Graph, int], ...]

    def __post_init__(self):
        support_ids = {id(g) for g, _ in self.support}
        if any(id(g) in support_ids for g, _ in self.query):
            raise ValueError("support and query sets must be disjoint")


@dataclass
class MetaParams:
    """Shared task parameters plus the bi-level optimization schedule."""

    encoder: EncoderParams
    classifier: ClassifierParams
    inner_lr: float
    meta_lr: float
    inner_steps: int

    def __post_init__(self):
        if self.inner_lr <= 0.0 or self.meta_lr < 0.0:
            raise ValueError("learning rates must be positive (meta_lr may be 0)")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be non-negative")


def sample_episode(
    ds: Dataset, task_id: int, shots: int, n_query: int, seed
) -> TaskEpisode:
    """Uniform per-class sampling without replacement, seeded and disjoint.

    The support set holds `shots` graphs per class; the query set splits
    n_query as evenly as possible (class 1 takes the odd remainder).
    """
    per_class: dict[int, list[int]] = {0: [], 1: []}
    for i, g in enumerate(ds.graphs):
        if g.class_label not in per_class:
            raise ValueError("episodes require binary class labels 0/1")
        per_class[g.class_label].append(i)
    query_need = {1: math.ceil(n_query / 2), 0: n_query // 2}
    rng = rng_from(seed, task_id)
    support: list[tuple[Graph, int]] = []
    query: list[tuple[Graph, int]] = []
    for label in (0, 1):
        pool = per_class[label]
        if len(pool) < shots + query_need[label]:
            raise ValueError(
                f"class {label} has {len(pool)} samples, needs "
                f"{shots + query_need[label]} for {shots}-shot with {n_query} queries"
            )
        order = rng.permutation(len(pool))
        chosen = [pool[j] for j in order]
        support.extend((ds.graphs[i], label) for i in chosen[:shots])
        query.extend(
            (ds.graphs[i], label)
            for i in chosen[shots : shots + query_need[label]]
        )
    return TaskEpisode(task_id, tuple(support), tuple(query))


def _support_mask_loss(mask_lifted, meta: MetaParams, episode: TaskEpisode, targets, mc_samples: int, seed):
    total = None
    for pos, (graph, _) in enumerate(episode.support):
        rng = rng_from(seed, episode.task_id, pos)
        loss = mask_objective(
            graph, meta.encoder, meta.classifier, mask_lifted, mc_samples, rng, target=targets[pos]
        )
        total = loss if total is None else total + loss
    return mul(1.0 / len(episode.support), total)


def inner_update(
    mask_params: MaskParams,
    meta: MetaParams,
    episode: TaskEpisode,
    mc_samples: int,
    seed,
) -> MaskParams:
    """Adapt the mask parameters with `inner_steps` plain gradient steps.

    The shared encoder/classifier stay fixed; with inner_steps == 0 the
    parameters are returned unchanged.
    """
    adapted = to_arrays(mask_params)
    if meta.inner_steps == 0:
        return adapted
    targets = [
        frozen_targets_for(graph, meta.encoder, meta.classifier)
        for graph, _ in episode.support
    ]
    for _ in range(meta.inner_steps):
        lifted = lift(adapted)
        loss = _support_mask_loss(lifted, meta, episode, targets, mc_samples, seed)
        if not np.isfinite(loss.data):
            raise ArithmeticError("non-finite inner loss")
        grads = backward(loss, tree_leaves(lifted))
        adapted = gradient_step(lifted, grads, meta.inner_lr)
    return adapted


def _episode_outer_loss(meta_lifted, mask_params: MaskParams, episode: TaskEpisode):
    """Support-set cross-entropy under the adapted masks (summed, as trained)."""
    total = None
    for graph, label in episode.support:
        probs = expected_prediction(
            graph, meta_lifted.encoder, meta_lifted.classifier, mask_params
        )
        term = cross_entropy(probs, label)
        total = term if total is None else total + term
    return total


def episode_query_metrics(
    meta: MetaParams, mask_params: MaskParams, episode: TaskEpisode
) -> tuple[float, float, list[float], list[int]]:
    """Mean query loss and accuracy plus class-1 scores under expected masks."""
    losses, scores, labels, hits = [], [], [], 0
    for graph, label in episode.query:
        probs = expected_prediction(graph, meta.encoder, meta.classifier, mask_params)
        losses.append(float(cross_entropy(probs, label).data))
        scores.append(float(probs.data[1]))
        labels.append(label)
        hits += int(int(np.argmax(probs.data)) == label)
    return (
        float(np.mean(losses)),
        hits / len(episode.query),
        scores,
        labels,
    )


def outer_step(
    meta: MetaParams,
    mask_params: MaskParams,
    episodes: list[TaskEpisode],
    mc_samples: int,
    seed,
) -> tuple[MetaParams, float, float]:
    """One first-order meta update over a batch of episodes.

    Per episode the masks adapt first; the adapted masks then enter the
    support loss as constants while gradients flow to the shared encoder
    and classifier. The batch gradient is the episode mean. Returns the
    updated parameters, the meta loss, and the mean query loss of the
    pre-update model.
    """
    if not episodes:
        raise ValueError("outer_step needs at least one episode")
    lifted = lift((meta.encoder, meta.classifier))
    lifted_meta = MetaParams(lifted[0], lifted[1], meta.inner_lr, meta.meta_lr, meta.inner_steps)
    total = None
    query_losses = []
    for episode in episodes:
        adapted = inner_update(mask_params, meta, episode, mc_samples, seed)
        loss = _episode_outer_loss(lifted_meta, adapted, episode)
        total = loss if total is None else total + loss
        query_losses.append(episode_query_metrics(meta, adapted, episode)[0])
    batch_loss = mul(1.0 / len(episodes), total)
    if not np.isfinite(batch_loss.data):
        raise ArithmeticError("non-finite meta loss")
    if meta.meta_lr != 0.0:
        grads = backward(batch_loss, tree_leaves(lifted))
        enc_new, clf_new = gradient_step(lifted, grads, meta.meta_lr)
    else:
        enc_new, clf_new = to_arrays(lifted)
    new_meta = MetaParams(enc_new, clf_new, meta.inner_lr, meta.meta_lr, meta.inner_steps)
    return new_meta, float(batch_loss.data), float(np.mean(query_losses))


def evaluate_episode(
    meta: MetaParams, mask_params: MaskParams, episode: TaskEpisode, mc_samples: int, seed
) -> tuple[float, float, list[float], list[int]]:
    """Adapt the masks on the support set, then score the query set."""
    adapted = inner_update(mask_params, meta, episode, mc_samples, seed)
    return episode_query_metrics(meta, adapted, episode)


def evaluate_roc_auc(scores: list[float], labels: list[int]) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative), ties 1/2."""
    scores = [float(s) for s in scores]
    labels = [int(y) for y in labels]
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs both classes present")
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            j += 1
        avg = (i + j + 1) / 2.0  # average 1-based rank over the tie block
        for k in range(i, j):
            ranks[order[k]] = avg
        i = j
    rank_sum = sum(r for r, y in zip(ranks, labels) if y == 1)
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class MetaHistoryRow:
    step: int
    meta_loss: float
    query_loss: float
    val_meta_loss: float | None
    val_query_auc: float | None
    val_task_accuracy: tuple[float, ...] | None


@dataclass(frozen=True)
class MetaTrainResult:
    meta: MetaParams
    history: tuple[MetaHistoryRow, ...]
    best_val_loss: float
    rounds: int


def _validation_episodes(
    tasks: list[Dataset], shots: int, n_query: int, seed: int, per_task: int
) -> list[TaskEpisode]:
    episodes = []
    for t in range(len(tasks)):
        for r in range(per_task):
            episodes.append(
                sample_episode(tasks[t], t, shots, n_query, (seed, VALIDATION_STREAM, r))
            )
    return episodes


def meta_train(
    tasks: list[Dataset],
    meta: MetaParams,
    mask_params: MaskParams,
    shots: int,
    n_query: int,
    episodes_per_step: int,
    steps_per_round: int,
    max_rounds: int,
    patience: int,
    mc_samples: int,
    seed: int,
    val_episodes_per_task: int = 2,
) -> MetaTrainResult:
    """Outer-loop training with early stopping on validation meta-loss.

    Runs rounds of `steps_per_round` outer steps, then scores held-back
    validation episodes. Training stops once the count of consecutive
    non-improving evaluations reaches `patience` (patience 0 therefore
    stops after the first evaluation) or after `max_rounds` rounds. The
    best-validation parameters are returned.
    """
    if not tasks:
        raise ValueError("meta_train needs at least one training task")
    val_eps = _validation_episodes(tasks, shots, n_query, seed, val_episodes_per_task)
    history: list[MetaHistoryRow] = []
    best_val = np.inf
    best_meta = MetaParams(
        to_arrays(meta.encoder), to_arrays(meta.classifier),
        meta.inner_lr, meta.meta_lr, meta.inner_steps,
    )
    bad_rounds = 0
    step = 0
    rounds = 0
    for _ in range(max_rounds):
        rounds += 1
        for _ in range(steps_per_round):
            rng = rng_from(seed, step)
            episodes = []
            for slot in range(episodes_per_step):
                t = int(rng.integers(0, len(tasks)))
                episodes.append(
                    sample_episode(tasks[t], t, shots, n_query, (seed, step, slot))
                )
            meta, meta_loss, query_loss = outer_step(
                meta, mask_params, episodes, mc_samples, (seed, step)
            )
            history.append(MetaHistoryRow(step, meta_loss, query_loss, None, None, None))
            step += 1

        val_losses, scores, labels = [], [], []
        per_task_hits: dict[int, list[float]] = {t: [] for t in range(len(tasks))}
        for episode in val_eps:
            adapted = inner_update(mask_params, meta, episode, mc_samples, (seed, episode.task_id))
            loss = float(_episode_outer_loss(meta, adapted, episode).data)
            val_losses.append(loss)
            q_loss, q_acc, q_scores, q_labels = episode_query_metrics(meta, adapted, episode)
            per_task_hits[episode.task_id].append(q_acc)
            scores.extend(q_scores)
            labels.extend(q_labels)
        val_loss = float(np.mean(val_losses))
        val_auc = evaluate_roc_auc(scores, labels)
        task_acc = tuple(
            float(np.mean(per_task_hits[t])) for t in range(len(tasks))
        )
        last = history[-1]
        history[-1] = MetaHistoryRow(
            last.step, last.meta_loss, last.query_loss, val_loss, val_auc, task_acc
        )
        if val_loss < best_val:
            best_val = val_loss
            best_meta = MetaParams(
                to_arrays(meta.encoder), to_arrays(meta.classifier),
                meta.inner_lr, meta.meta_lr, meta.inner_steps,
            )
            bad_rounds = 0
        else:
            bad_rounds += 1
        if bad_rounds >= patience:
            break
    return MetaTrainResult(best_meta, tuple(history), best_val, rounds)

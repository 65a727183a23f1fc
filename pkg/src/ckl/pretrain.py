"""Supervised pre-training of the encoder and classifier.

Full-batch gradient descent on the mean cross-entropy over the dataset,
seeded and deterministic. The returned parameters are the checkpoint
with the best training loss, which downstream stages then freeze.
"""

from __future__ import annotations

import numpy as np

from .autodiff import backward, mul
from .encoder import (
    ClassifierParams,
    EncoderParams,
    cross_entropy,
    init_classifier,
    init_encoder,
    predict,
)
from .graphs import Dataset
from .params import gradient_step, lift, to_arrays, tree_leaves
from .seeding import rng_from


def pretrain_classifier(
    ds: Dataset,
    hidden: int,
    num_layers: int,
    epochs: int,
    lr: float,
    seed: int,
) -> tuple[EncoderParams, ClassifierParams, list[float]]:
    """Train a fresh encoder + classifier; returns the best-loss checkpoint.

    With epochs == 0 the seeded initialization comes back untouched and
    the loss trace is empty.
    """
    if any(g.class_label is None for g in ds.graphs):
        raise ValueError("pre-training requires labeled graphs")
    rng = rng_from(seed)
    enc = init_encoder(ds.feature_dim, hidden, num_layers, rng)
    clf = init_classifier(hidden, ds.num_classes, rng)
    current = to_arrays((enc, clf))
    best = current
    best_loss = np.inf
    trace: list[float] = []
    for epoch in range(epochs):
        lifted = lift(current)
        enc_l, clf_l = lifted
        total = None
        for g in ds.graphs:
            term = cross_entropy(predict(g, enc_l, clf_l), g.class_label)
            total = term if total is None else total + term
        loss = mul(1.0 / len(ds.graphs), total)
        value = float(loss.data)
        if not np.isfinite(value):
            raise ArithmeticError(f"non-finite pre-training loss at epoch {epoch}")
        trace.append(value)
        if value < best_loss:
            best_loss = value
            best = current
        grads = backward(loss, tree_leaves(lifted))
        current = gradient_step(lifted, grads, lr)
    enc_best, clf_best = best
    return enc_best, clf_best, trace

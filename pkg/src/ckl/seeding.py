"""Deterministic random streams keyed by tuples of integers."""

from __future__ import annotations

import numpy as np


def rng_from(*parts) -> np.random.Generator:
    """A generator seeded by the flattened integer parts, in order."""
    flat: list[int] = []
    for p in parts:
        if isinstance(p, (list, tuple)):
            flat.extend(int(x) for x in p)
        else:
            flat.append(int(p))
    return np.random.default_rng(flat)

"""Parameter containers as trees of numpy arrays, plus checkpoint IO.

Parameter structures are plain dataclasses whose leaves are float64
arrays. Training lifts a structure into gradient-tracked tensors, runs
the forward/backward pass, and applies a plain gradient step back onto
arrays. Checkpoints serialize every named leaf to JSON:

    {"format": "ckl-params", "version": 1, "kind": "<label>",
     "tensors": {"<dotted.path>": {"shape": [...], "data": [...]}}}

Float values are written with ``repr`` so a load/save round trip is
bitwise exact.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_FORMAT = "ckl-params"
CHECKPOINT_VERSION = 1


def _is_leaf(x) -> bool:
    return isinstance(x, (np.ndarray, Tensor))


def tree_map(obj, fn):
    """Rebuild a parameter tree, applying fn to every array/tensor leaf."""
    if _is_leaf(obj):
        return fn(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        kwargs = {
            f.name: tree_map(getattr(obj, f.name), fn) for f in dataclasses.fields(obj)
        }
        return type(obj)(**kwargs)
    if isinstance(obj, list):
        return [tree_map(v, fn) for v in obj]
    if isinstance(obj, tuple):
        return tuple(tree_map(v, fn) for v in obj)
    if isinstance(obj, dict):
        return {k: tree_map(obj[k], fn) for k in obj}
    return obj


def named_leaves(obj, prefix: str = "") -> list[tuple[str, np.ndarray | Tensor]]:
    """Deterministically ordered (dotted path, leaf) pairs of a tree."""
    out: list[tuple[str, np.ndarray | Tensor]] = []
    if _is_leaf(obj):
        out.append((prefix or "value", obj))
        return out
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            sub = f"{prefix}.{f.name}" if prefix else f.name
            out.extend(named_leaves(getattr(obj, f.name), sub))
        return out
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            sub = f"{prefix}.{i}" if prefix else str(i)
            out.extend(named_leaves(v, sub))
        return out
    if isinstance(obj, dict):
        for k in sorted(obj):
            sub = f"{prefix}.{k}" if prefix else str(k)
            out.extend(named_leaves(obj[k], sub))
        return out
    return out


def tree_leaves(obj) -> list[np.ndarray | Tensor]:
    return [leaf for _, leaf in named_leaves(obj)]


def lift(obj, requires_grad: bool = True):
    """Copy a tree of arrays into gradient-tracked tensors."""
    return tree_map(obj, lambda a: Tensor(np.asarray(a.data if isinstance(a, Tensor) else a), requires_grad))


def to_arrays(obj):
    """Copy a tree of tensors back into plain writable arrays."""
    return tree_map(obj, lambda t: np.array(t.data if isinstance(t, Tensor) else t))


def gradient_step(lifted, grads: dict[Tensor, Tensor], lr: float):
    """One plain gradient-descent step: leaf - lr * grad, as arrays.

    Leaves absent from `grads` are carried over unchanged.
    """

    def step(leaf):
        g = grads.get(leaf)
        if g is None:
            return np.array(leaf.data)
        return leaf.data - lr * g.data

    return tree_map(lifted, step)


def save_checkpoint(path: str | Path, obj, kind: str) -> None:
    tensors = {}
    for name, leaf in named_leaves(obj):
        arr = np.asarray(leaf.data if isinstance(leaf, Tensor) else leaf, dtype=np.float64)
        tensors[name] = {"shape": list(arr.shape), "data": [repr(v) for v in arr.reshape(-1)]}
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "tensors": tensors,
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path, template, kind: str | None = None):
    """Load arrays into a tree shaped like `template` (values are replaced)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if kind is not None and payload.get("kind") != kind:
        raise ValueError(f"{path}: checkpoint kind {payload.get('kind')!r}, expected {kind!r}")
    tensors = payload["tensors"]
    expected = [name for name, _ in named_leaves(template)]
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise ValueError(f"{path}: checkpoint layout mismatch (missing={missing}, extra={extra})")

    entries = iter(expected)

    def restore(leaf):
        name = next(entries)
        spec = tensors[name]
        arr = np.array([float(v) for v in spec["data"]], dtype=np.float64)
        arr = arr.reshape(spec["shape"])
        ref_shape = tuple(leaf.shape)
        if arr.shape != ref_shape:
            raise ValueError(f"{path}: tensor {name} has shape {arr.shape}, expected {ref_shape}")
        return arr

    return tree_map(template, restore)

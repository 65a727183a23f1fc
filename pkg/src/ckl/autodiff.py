"""Dense float64 tensors with reverse-mode automatic differentiation.

The recorded trace lives on the tensors themselves: every tensor produced
from at least one gradient-requiring input keeps references to its parent
tensors and a vector-Jacobian closure. ``backward`` linearizes that record
once (topological order) and replays it in reverse, summing cotangents at
fan-out points. Tensors are immutable; repeated backward passes over the
same trace are bitwise reproducible.

Stochastic inputs (e.g. relaxation noise) enter as plain constants, so
differentiation only ever sees the deterministic function of the
parameters given frozen noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

LOG_EPS = 1e-12


class Tensor:
    """Immutable dense float64 array plus backprop bookkeeping."""

    __slots__ = ("data", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce(self, "sum", axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _reduce(self, "mean", axis, keepdims)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    data = np.asarray(data, dtype=np.float64)
    data.flags.writeable = False
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over axes that numpy broadcasting expanded."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return np.reshape(grad, shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
        out = a.data @ b.data

        def vjp(g):
            return g @ b.data.T, a.data.T @ g

        return _make(out, (a, b), vjp)
    if a.ndim == 1 and b.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
        out = a.data @ b.data

        def vjp(g):
            return b.data @ g, np.outer(a.data, g)

        return _make(out, (a, b), vjp)
    raise ValueError(f"matmul: unsupported ranks {a.ndim} and {b.ndim}")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat: need at least one input")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(out, tuple(ts), vjp)


def _reduce(x, kind: str, axis, keepdims: bool) -> Tensor:
    x = as_tensor(x)
    if kind == "sum":
        out = x.data.sum(axis=axis, keepdims=keepdims)
        scale = 1.0
    else:
        out = x.data.mean(axis=axis, keepdims=keepdims)
        scale = out.size / x.data.size if x.data.size else 1.0
    shape = x.shape

    def vjp(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        elif axis is None and g.ndim == 0:
            g = g.reshape((1,) * len(shape)) if shape else g
        return (np.broadcast_to(g, shape) * scale,)

    return _make(out, (x,), vjp)


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def vjp(g):
        return (g * (x.data > 0.0),)

    return _make(out, (x,), vjp)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), vjp)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise ValueError("log: input must be strictly positive (clamp at 1e-12 first)")
    out = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return _make(out, (x,), vjp)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (x,), vjp)


def softmax_row(x) -> Tensor:
    """Row-wise softmax; a 1-D input is treated as a single row."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (x,), vjp)


def abs_(x) -> Tensor:
    x = as_tensor(x)
    out = np.abs(x.data)

    def vjp(g):
        return (g * np.sign(x.data),)

    return _make(out, (x,), vjp)


def clamp_min(x, floor: float) -> Tensor:
    """max(x, floor); gradient passes through wherever x >= floor."""
    x = as_tensor(x)
    out = np.maximum(x.data, floor)

    def vjp(g):
        return (g * (x.data >= floor),)

    return _make(out, (x,), vjp)


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "sum": lambda x, axis=None, keepdims=False: _reduce(x, "sum", axis, keepdims),
    "mean": lambda x, axis=None, keepdims=False: _reduce(x, "mean", axis, keepdims),
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
    "softmax_row": softmax_row,
}


def forward_primitive(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch one named primitive; unknown names raise KeyError."""
    try:
        op = PRIMITIVES[op_kind]
    except KeyError:
        raise KeyError(f"unknown primitive {op_kind!r}") from None
    return op(*inputs, **kwargs)


def _topo_order(loss: Tensor) -> list[Tensor]:
    """Iterative post-order over the recorded trace reachable from `loss`."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Sequence[Tensor]) -> dict[Tensor, Tensor]:
    """Return the gradient of a scalar loss for every requested parameter.

    Gradients sum over fan-out; parameters the trace never touched map to
    zeros of their own shape.
    """
    if loss.shape != ():
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}
    for node in reversed(_topo_order(loss)):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
    return {
        p: Tensor(grads.get(id(p), np.zeros(p.shape)))
        for p in params
    }


@dataclass(frozen=True)
class FiniteDifferenceReport:
    per_param: tuple[float, ...]
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def finite_difference_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> FiniteDifferenceReport:
    """Compare reverse-mode gradients of f against central differences.

    `f` must be a deterministic scalar function of the parameter list
    (freeze any noise inputs before calling). Relative error uses the
    denominator max(|analytic|, |numeric|, 1e-8).
    """
    arrays = [np.asarray(p, dtype=np.float64) for p in params]
    lifted = [Tensor(a, requires_grad=True) for a in arrays]
    out = f(lifted)
    if not np.isfinite(out.data):
        raise ValueError("finite_difference_check: f returned a non-finite value")
    analytic = backward(out, lifted)

    def eval_at(values: list[np.ndarray]) -> float:
        result = f([Tensor(v) for v in values])
        val = float(result.data)
        if not np.isfinite(val):
            raise ValueError("finite_difference_check: f returned a non-finite value")
        return val

    per_param = []
    for i, base in enumerate(arrays):
        ana = analytic[lifted[i]].data
        worst = 0.0
        flat = base.reshape(-1)
        for j in range(flat.size):
            bumped = [a.copy() for a in arrays]
            bumped[i].reshape(-1)[j] = flat[j] + h
            up = eval_at(bumped)
            bumped[i].reshape(-1)[j] = flat[j] - h
            down = eval_at(bumped)
            numeric = (up - down) / (2.0 * h)
            a = float(ana.reshape(-1)[j])
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
        per_param.append(worst)
    max_err = max(per_param) if per_param else 0.0
    return FiniteDifferenceReport(tuple(per_param), max_err, tol)

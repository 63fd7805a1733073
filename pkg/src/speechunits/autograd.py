"""Minimal reverse-mode autodiff over float32 numpy arrays.

Only the operations the unit-to-text trainer needs: broadcasting arithmetic,
matmul (optionally batched), embedding lookup, concat/reshape/transpose,
layer norm, softmax and a fused masked cross-entropy. The graph is the
implicit DAG of ``Tensor`` nodes; ``backward`` walks it once in reverse
topological order and accumulates ``.grad`` on every node that requires
gradients.

``no_grad()`` disables tape construction for inference-speed forward passes.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np


class NumericsError(RuntimeError):
    """A non-finite value surfaced where the trainer requires finite math."""


_grad_enabled = True
_check_forward = False


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_forward_checks(enabled: bool) -> None:
    """Check every op output for NaN/Inf (slow; used by tests)."""
    global _check_forward
    _check_forward = enabled


class Tensor:
    """A float32 array plus the tape record that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), vjp: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, op: str, parents: tuple[Tensor, ...],
          vjp: Callable) -> Tensor:
    if _check_forward and not np.all(np.isfinite(data)):
        raise NumericsError(f"non-finite output of op '{op}'")
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=parents, vjp=vjp)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _make(out, "add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _make(out, "sub", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return _make(out, "mul", (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    return _make(a.data * np.float32(s), "scale", (a,), lambda g: (g * np.float32(s),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0)
    return _make(out, "relu", (a,), lambda g: (g * (a.data > 0),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)
    return _make(out, "log", (a,), lambda g: (g / a.data,))


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(np.float32),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).astype(np.float32),)

    return _make(out, "sum", (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), "reshape", (a,),
                 lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), "transpose", (a,),
                 lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, "concat", tensors, vjp)


# ---------------------------------------------------------------------------
# neural-net ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _make(out, "matmul", (a, b), vjp)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: ids (T,) of ints -> (T, dim). Backward scatter-adds."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.shape[0]}) in lookup")
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(out, "embedding", (table,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, "softmax", (a,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        d = x.shape[-1]
        dxhat = g * gain.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=axes) if axes else g * xhat
        dbias = g.sum(axis=axes) if axes else g
        return (dx.astype(np.float32),
                _unbroadcast(dgain, gain.shape),
                _unbroadcast(dbias, bias.shape))

    return _make(out, "layer_norm", (x, gain, bias), vjp)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Plain-numpy stable log-softmax over the last axis (inference helper)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets: np.ndarray, *,
                  mask: np.ndarray | None = None,
                  label_smoothing: float = 0.0,
                  reduction: str = "sum") -> Tensor:
    """Fused NLL of log-softmax rows at the gold indices.

    logits (S, V), targets (S,) ints. `mask` weights positions (PAD rows get
    0). With label smoothing eps the target distribution is
    (1-eps)*onehot + eps/V.
    """
    targets = np.asarray(targets, dtype=np.int64)
    S, V = logits.shape
    if targets.shape != (S,):
        raise ValueError(f"targets shape {targets.shape} != ({S},)")
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise IndexError(f"target index out of range [0, {V})")
    w = np.ones(S, dtype=np.float32) if mask is None else mask.astype(np.float32)
    eps = float(label_smoothing)

    logp = log_softmax_rows(logits.data)
    nll_gold = -logp[np.arange(S), targets]
    if eps > 0.0:
        nll = (1.0 - eps) * nll_gold - (eps / V) * logp.sum(axis=-1)
    else:
        nll = nll_gold
    total = float((nll * w).sum())
    denom = float(w.sum()) if reduction == "mean" else 1.0
    if reduction == "mean" and denom == 0.0:
        raise ValueError("cross_entropy mean over an all-masked sequence")
    out = np.float32(total / denom)

    def vjp(g):
        probs = np.exp(logp)
        target_dist = np.zeros_like(probs)
        target_dist[np.arange(S), targets] = 1.0 - eps
        if eps > 0.0:
            target_dist += eps / V
        gl = (probs - target_dist) * w[:, None]
        return (gl * (float(g) / denom),)

    return _make(out, "cross_entropy", (logits,), vjp)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _topo_order(loss: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor reachable from `loss` that requires it.

    Visits each node exactly once, in reverse topological order. Raises
    NumericsError naming the producing op if a non-finite value appears.
    """
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise NumericsError(f"loss is non-finite (op '{loss.op}')")
    if not loss.requires_grad:
        return

    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        parent_grads = node._vjp(node.grad)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NumericsError(
                    f"non-finite gradient produced by op '{node.op}' "
                    f"flowing into '{parent.op}'")
            pg = pg.astype(np.float32, copy=False).reshape(parent.shape)
            if parent.grad is None:
                parent.grad = pg.copy()
            else:
                parent.grad = parent.grad + pg

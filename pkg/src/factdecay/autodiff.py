"""Reverse-mode automatic differentiation over dense float64 arrays.

Tape-style engine: every op returns a new Tensor holding its numpy value
and a closure that routes the output gradient back to the inputs.  Scope
is deliberately small: 2-d matrices, numpy broadcasting on add/mul, row
gathers, and contiguous row-segment reductions for neighborhood and group
aggregation.  Gradients accumulate additively across backward calls until
zeroed.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Propagate d(self)/d(leaf) into every reachable leaf's .grad."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to ``shape`` along the axes numpy broadcast expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_same_cols(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_cols(a, b, "add")
    data = a.data + b.data

    def backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_cols(a, b, "mul")
    data = a.data * b.data

    def backward(g):
        a.accumulate(_unbroadcast(g * b.data, a.shape))
        b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def backward(g):
        a.accumulate(g * c)

    return _make(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def backward(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    return _make(data, (a, b), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets, offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t.accumulate(g[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def gather_rows(a: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows: indices must be 1-d")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ValueError(f"gather_rows: index out of range for {a.shape[0]} rows")
    data = a.data[idx]

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        a.accumulate(acc)

    return _make(data, (a,), backward)


def tsum(a: Tensor) -> Tensor:
    data = np.array([[a.data.sum()]])

    def backward(g):
        a.accumulate(np.full_like(a.data, g[0, 0]))

    return _make(data, (a,), backward)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.array([[a.data.sum() / n]])

    def backward(g):
        a.accumulate(np.full_like(a.data, g[0, 0] / n))

    return _make(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        a.accumulate(g * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log: non-positive input")
    data = np.log(a.data)

    def backward(g):
        a.accumulate(g / a.data)

    return _make(data, (a,), backward)


def cos(a: Tensor) -> Tensor:
    data = np.cos(a.data)

    def backward(g):
        a.accumulate(-g * np.sin(a.data))

    return _make(data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        a.accumulate(g * data * (1.0 - data))

    return _make(data, (a,), backward)


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu: slope must lie in (0, 1), got {slope}")
    mask = a.data >= 0
    data = np.where(mask, a.data, slope * a.data)

    def backward(g):
        a.accumulate(g * np.where(mask, 1.0, slope))

    return _make(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0.0)

    def backward(g):
        a.accumulate(g * mask)

    return _make(data, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is passed through only where unclamped."""
    inside = (a.data > lo) & (a.data < hi)
    data = np.clip(a.data, lo, hi)

    def backward(g):
        a.accumulate(g * inside)

    return _make(data, (a,), backward)


def l1_norm_rowwise(a: Tensor) -> Tensor:
    data = np.abs(a.data).sum(axis=1, keepdims=True)

    def backward(g):
        a.accumulate(g * np.sign(a.data))

    return _make(data, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over a single vector (any shape with one non-unit axis)."""
    if a.data.size == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(a.data)):
        raise ValueError("softmax: non-finite input")
    flat = a.data.reshape(-1)
    shifted = flat - flat.max()
    e = np.exp(shifted)
    s = (e / e.sum()).reshape(a.data.shape)

    def backward(g):
        gs = (g.reshape(-1) * s.reshape(-1))
        a.accumulate((gs - s.reshape(-1) * gs.sum()).reshape(a.data.shape))

    return _make(s, (a,), backward)


def _check_offsets(offsets: np.ndarray, n_rows: int) -> None:
    if offsets.ndim != 1 or offsets[0] != 0 or offsets[-1] != n_rows:
        raise ValueError("segment offsets must run from 0 to the row count")
    if np.any(np.diff(offsets) <= 0):
        raise ValueError("segments must be non-empty")


def segment_sum(a: Tensor, offsets) -> Tensor:
    """Sum contiguous row segments: offsets [0, s1, s2, ..., n]."""
    offsets = np.asarray(offsets, dtype=np.int64)
    _check_offsets(offsets, a.shape[0])
    counts = np.diff(offsets)
    data = np.add.reduceat(a.data, offsets[:-1], axis=0)

    def backward(g):
        a.accumulate(np.repeat(g, counts, axis=0))

    return _make(data, (a,), backward)


def segment_mean(a: Tensor, offsets) -> Tensor:
    offsets = np.asarray(offsets, dtype=np.int64)
    _check_offsets(offsets, a.shape[0])
    counts = np.diff(offsets)
    data = np.add.reduceat(a.data, offsets[:-1], axis=0) / counts[:, None]

    def backward(g):
        a.accumulate(np.repeat(g / counts[:, None], counts, axis=0))

    return _make(data, (a,), backward)


def repeat_rows(a: Tensor, counts) -> Tensor:
    """Tile row i of ``a`` counts[i] times (inverse of a segment reduce)."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (a.shape[0],) or np.any(counts <= 0):
        raise ValueError("repeat_rows: counts must be positive, one per row")
    offsets = np.concatenate([[0], np.cumsum(counts)])
    data = np.repeat(a.data, counts, axis=0)

    def backward(g):
        a.accumulate(np.add.reduceat(g, offsets[:-1], axis=0))

    return _make(data, (a,), backward)


def segment_softmax(a: Tensor, offsets) -> Tensor:
    """Stabilized softmax within each contiguous row segment of a column."""
    if a.shape[1] != 1:
        raise ValueError(f"segment_softmax: expected a column vector, got {a.shape}")
    offsets = np.asarray(offsets, dtype=np.int64)
    _check_offsets(offsets, a.shape[0])
    counts = np.diff(offsets)
    seg_max = np.maximum.reduceat(a.data, offsets[:-1], axis=0)
    e = np.exp(a.data - np.repeat(seg_max, counts, axis=0))
    seg_sum = np.add.reduceat(e, offsets[:-1], axis=0)
    s = e / np.repeat(seg_sum, counts, axis=0)

    def backward(g):
        gs = g * s
        seg_dot = np.add.reduceat(gs, offsets[:-1], axis=0)
        a.accumulate(gs - s * np.repeat(seg_dot, counts, axis=0))

    return _make(s, (a,), backward)


# --- parameter initialization -------------------------------------------------

def init_embedding(rng: np.random.Generator, count: int, dim: int) -> Tensor:
    bound = 1.0 / math.sqrt(dim)
    return Tensor(rng.uniform(-bound, bound, size=(count, dim)), requires_grad=True)


def init_linear(rng: np.random.Generator, n_in: int, n_out: int) -> Tensor:
    bound = 1.0 / math.sqrt(n_in)
    return Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)


def init_scalar(rng: np.random.Generator) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=(1, 1)), requires_grad=True)


# --- finite-difference checking -----------------------------------------------

def finite_difference_grads(
    fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradients of ``fn()`` w.r.t. each tensor entry."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        for i in range(t.data.size):
            orig = t.data.flat[i]
            t.data.flat[i] = orig + step
            hi = fn().item()
            t.data.flat[i] = orig - step
            lo = fn().item()
            t.data.flat[i] = orig
            g.flat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum.reduce([np.abs(analytic), np.abs(numeric),
                               np.full_like(analytic, 1e-6)])
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(
    fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5
) -> float:
    """Max relative error between backward() and central finite differences."""
    for t in tensors:
        t.zero_grad()
    out = fn()
    out.backward()
    numeric = finite_difference_grads(fn, tensors, step)
    err = 0.0
    for t, num in zip(tensors, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        err = max(err, max_relative_error(analytic, num))
    for t in tensors:
        t.zero_grad()
    return err

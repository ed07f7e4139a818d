"""Tape-based reverse-mode differentiation over numpy arrays.

Only the primitives this pipeline needs are defined. Ops called while a
:class:`GradientTape` is active, with at least one input that requires a
gradient, are recorded; otherwise they just compute values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .. import _kernels


class Tensor:
    __slots__ = ("value", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad}, name={self.name!r})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradientTape:
    """Records ops in forward order and replays them in exact reverse.

    >>> with GradientTape() as tape:
    ...     w = tape.watch(np.ones(3))
    ...     loss = sum_all(mul(w, w))
    >>> tape.gradient(loss, [w])[0]
    array([2., 2., 2.])
    """

    _active: list["GradientTape"] = []

    def __init__(self):
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.watched: list[Tensor] = []

    def __enter__(self):
        GradientTape._active.append(self)
        return self

    def __exit__(self, *exc):
        GradientTape._active.remove(self)
        return False

    def watch(self, value, name: str | None = None) -> Tensor:
        t = value if isinstance(value, Tensor) else Tensor(value, name=name)
        t.requires_grad = True
        self.watched.append(t)
        return t

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], vjp: Callable) -> None:
        self.ops.append((out, inputs, vjp))

    def gradient(self, loss: Tensor, sources: Sequence[Tensor] | None = None) -> list[np.ndarray]:
        if loss.value.size != 1:
            raise ValueError("gradient() needs a scalar loss")
        sources = self.watched if sources is None else list(sources)
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for out, inputs, vjp in reversed(self.ops):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return [grads.get(id(s), np.zeros_like(s.value)) for s in sources]


def _current_tape() -> GradientTape | None:
    return GradientTape._active[-1] if GradientTape._active else None


def _op(value: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    tape = _current_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.record(out, inputs, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise / linear algebra ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _op(a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _op(a.value * b.value, (a, b),
               lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    return _op(a.value * s, (a,), lambda g: (g * s,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        gb = np.outer(a.value, g) if a.value.ndim == 1 else a.value.T @ g
        return g @ b.value.T, gb

    return _op(a.value @ b.value, (a, b), vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _op(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _stable_sigmoid(a.value)
    return _op(s, (a,), lambda g: (g * s * (1.0 - s),))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _op(np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    return _op(np.asarray(a.value.mean()), (a,), lambda g: (np.full(a.shape, g / n),))


def take_rows(a, rows) -> Tensor:
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, rows, g)
        return (out,)

    return _op(a.value[rows], (a,), vjp)


def segment_mean(a, segment_ids, num_segments: int) -> Tensor:
    """Row-wise mean of ``a`` grouped by ``segment_ids`` (every segment non-empty)."""
    a = as_tensor(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("segment_mean: empty segment")
    out = np.zeros((num_segments, a.shape[1]))
    np.add.at(out, seg, a.value)
    out /= counts[:, None]
    return _op(out, (a,), lambda g: ((g / counts[:, None])[seg],))


def l2_normalize_rows(a, eps: float = 1e-12) -> Tensor:
    a = as_tensor(a)
    norms = np.sqrt((a.value ** 2).sum(axis=1, keepdims=True))
    if np.any(norms < eps):
        raise FloatingPointError("cannot normalize a zero row")
    u = a.value / norms

    def vjp(g):
        return ((g - u * (g * u).sum(axis=1, keepdims=True)) / norms,)

    return _op(u, (a,), vjp)


# --- sparse propagation -------------------------------------------------------


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix with float64 data; ``symmetric`` lets backward reuse it."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]
    symmetric: bool = False

    def dot(self, x: np.ndarray) -> np.ndarray:
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"sparse shape {self.shape} incompatible with {x.shape}")
        return _kernels.spmm(self.indptr, self.indices, self.data, np.ascontiguousarray(x))

    def transpose(self) -> "SparseMatrix":
        if self.symmetric:
            return self
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        order = np.lexsort((rows, self.indices))
        cols = self.indices[order]
        indptr = np.zeros(self.shape[1] + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=self.shape[1]), out=indptr[1:])
        return SparseMatrix(indptr, rows[order], self.data[order], (self.shape[1], self.shape[0]))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        np.add.at(out, (rows, self.indices), self.data)
        return out


def spmm(adj: SparseMatrix, x) -> Tensor:
    x = as_tensor(x)
    return _op(adj.dot(x.value), (x,), lambda g: (adj.transpose().dot(g),))


# --- losses -------------------------------------------------------------------


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over rows of -log softmax(logits)[label]; -inf logits are allowed off-target."""
    logits = as_tensor(logits)
    x = logits.value
    single = x.ndim == 1
    if single:
        x = x[None, :]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape[0] != x.shape[0]:
        raise ValueError("one label per logit row required")
    if np.any(labels < 0) or np.any(labels >= x.shape[1]):
        raise ValueError("label outside the logit range")
    logp = log_softmax_rows(x)
    n = x.shape[0]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def vjp(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        grad *= g / n
        return (grad[0] if single else grad,)

    return _op(np.asarray(loss), (logits,), vjp)

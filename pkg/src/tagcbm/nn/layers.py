"""GCN encoder, MLP classifier and the batching helpers that feed them."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..graphcore import EgoNetwork
from .autograd import (
    GradientTape,
    SparseMatrix,
    Tensor,
    add,
    as_tensor,
    matmul,
    relu,
    segment_mean,
    softmax_cross_entropy as _ce,
    spmm,
    take_rows,
)

GCN_HIDDEN = 64


def he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class _Params:
    """Mixin for dataclasses whose fields are arrays (or lists of arrays)."""

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, (list, tuple)):
                out.extend((f"{f.name}.{i}", v) for i, v in enumerate(val))
            elif val is not None:
                out.append((f.name, val))
        return out

    def arrays(self) -> list:
        return [a for _, a in self.named_arrays()]

    def with_arrays(self, arrays: Sequence):
        """Rebuild with ``arrays`` substituted in :meth:`named_arrays` order."""
        it = iter(arrays)
        kwargs = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, (list, tuple)):
                kwargs[f.name] = [next(it) for _ in val]
            elif val is not None:
                kwargs[f.name] = next(it)
        return replace(self, **kwargs)

    def watch(self, tape: GradientTape):
        return self.with_arrays([tape.watch(a) for a in self.arrays()])

    def values(self):
        return self.with_arrays([as_tensor(a).value for a in self.arrays()])


@dataclass
class GcnEncoderParams(_Params):
    W1: np.ndarray
    W2: np.ndarray
    b1: np.ndarray | None = None
    b2: np.ndarray | None = None

    @classmethod
    def init(cls, d_in: int, d_emb: int, seed: int = 0, hidden: int = GCN_HIDDEN,
             bias: bool = True) -> "GcnEncoderParams":
        rng = np.random.default_rng(seed)
        W1 = he_uniform(rng, d_in, hidden)
        W2 = he_uniform(rng, hidden, d_emb)
        if not bias:
            return cls(W1, W2)
        return cls(W1, W2, np.zeros(hidden), np.zeros(d_emb))

    @property
    def d_in(self) -> int:
        return as_tensor(self.W1).shape[0]

    @property
    def d_emb(self) -> int:
        return as_tensor(self.W2).shape[1]


@dataclass
class MlpClassifierParams(_Params):
    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for a, b in zip(self.weights, self.weights[1:]):
            if as_tensor(a).shape[1] != as_tensor(b).shape[0]:
                raise ValueError("consecutive layer shapes do not chain")

    @classmethod
    def init(cls, d_in: int, n_classes: int, hidden: Sequence[int] = (64,), seed: int = 0) -> "MlpClassifierParams":
        rng = np.random.default_rng(seed)
        sizes = [d_in, *hidden, n_classes]
        weights = [he_uniform(rng, a, b) for a, b in zip(sizes, sizes[1:])]
        return cls(weights, [np.zeros(b) for b in sizes[1:]])

    @property
    def n_classes(self) -> int:
        return as_tensor(self.weights[-1]).shape[1]


# --- adjacency ----------------------------------------------------------------


def normalized_adjacency(n: int, indptr: np.ndarray, indices: np.ndarray) -> SparseMatrix:
    """D^-1/2 (A + I) D^-1/2 for a symmetric CSR pattern without self-loops."""
    deg = np.diff(indptr) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    # insert the diagonal into each (sorted) row
    all_rows = np.concatenate([rows, np.arange(n)])
    all_cols = np.concatenate([indices, np.arange(n)])
    order = np.lexsort((all_cols, all_rows))
    all_rows, all_cols = all_rows[order], all_cols[order]
    data = inv_sqrt[all_rows] * inv_sqrt[all_cols]
    new_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(all_rows, minlength=n), out=new_indptr[1:])
    return SparseMatrix(new_indptr, all_cols.astype(np.int64), data, (n, n), symmetric=True)


def dense_normalized_adjacency(n: int, edges) -> np.ndarray:
    A = np.eye(n)
    for u, v in edges:
        A[u, v] = A[v, u] = 1.0
    d = A.sum(axis=1)
    return A / np.sqrt(np.outer(d, d))


@dataclass(frozen=True)
class EgoBatch:
    """Ego-networks stacked into one block-diagonal graph."""

    adj: SparseMatrix
    node_ids: np.ndarray      # global node id per stacked row
    centers: np.ndarray       # stacked row of each ego's center
    segments: np.ndarray      # ego index per stacked row

    @property
    def size(self) -> int:
        return self.centers.shape[0]


def ego_batch(egos: Sequence[EgoNetwork]) -> EgoBatch:
    if not egos:
        raise ValueError("empty ego batch")
    indptrs, indices, datas, ids, centers, segs = [], [], [], [], [], []
    row_off = 0
    nnz_off = 0
    for i, ego in enumerate(egos):
        adj = _ego_adjacency(ego)
        n = adj.shape[0]
        indptrs.append(adj.indptr[:-1] + nnz_off)
        indices.append(adj.indices + row_off)
        datas.append(adj.data)
        ids.append(np.asarray(ego.sorted_nodes, dtype=np.int64))
        centers.append(row_off + ego.center_index)
        segs.append(np.full(n, i, dtype=np.int64))
        row_off += n
        nnz_off += adj.indices.shape[0]
    indptr = np.concatenate(indptrs + [np.array([nnz_off], dtype=np.int64)])
    adj = SparseMatrix(indptr, np.concatenate(indices), np.concatenate(datas), (row_off, row_off), symmetric=True)
    return EgoBatch(adj, np.concatenate(ids), np.array(centers, dtype=np.int64), np.concatenate(segs))


@lru_cache(maxsize=65536)
def _ego_adjacency(ego: EgoNetwork) -> SparseMatrix:
    indptr, indices = ego.local_csr
    return normalized_adjacency(len(ego.sorted_nodes), indptr, indices)


# --- forward passes -----------------------------------------------------------


def gcn_forward(adj_norm: SparseMatrix, X, params: GcnEncoderParams) -> Tensor:
    """Two-layer GCN: A_hat . relu(A_hat . X . W1 + b1) . W2 + b2."""
    X = as_tensor(X)
    if adj_norm.shape[0] != adj_norm.shape[1] or adj_norm.shape[1] != X.shape[0]:
        raise ValueError(f"adjacency {adj_norm.shape} does not match features {X.shape}")
    if X.shape[1] != params.d_in:
        raise ValueError(f"feature width {X.shape[1]} != encoder input {params.d_in}")
    h = matmul(spmm(adj_norm, X), params.W1)
    if params.b1 is not None:
        h = add(h, params.b1)
    h = matmul(spmm(adj_norm, relu(h)), params.W2)
    if params.b2 is not None:
        h = add(h, params.b2)
    return h


def readout(H, ego_or_batch, mode: str = "center") -> Tensor:
    """Reduce node embeddings to one row per ego-network (``center`` or ``mean``)."""
    H = as_tensor(H)
    if isinstance(ego_or_batch, EgoNetwork):
        ego = ego_or_batch
        if H.shape[0] != len(ego.nodes):
            raise ValueError("embedding rows do not match the ego-network size")
        if mode == "center":
            return take_rows(H, ego.center_index)
        if mode == "mean":
            return take_rows(segment_mean(H, np.zeros(H.shape[0], dtype=np.int64), 1), 0)
        raise ValueError(f"unknown readout mode {mode!r}")
    else:
        centers, segments = ego_or_batch.centers, ego_or_batch.segments
        if H.shape[0] != segments.shape[0]:
            raise ValueError("embedding rows do not match the batch")
    if mode == "center":
        return take_rows(H, centers)
    if mode == "mean":
        return segment_mean(H, segments, centers.shape[0])
    raise ValueError(f"unknown readout mode {mode!r}")


def encode_egos(egos: Sequence[EgoNetwork], features: np.ndarray, params: GcnEncoderParams,
                readout_mode: str = "center", chunk: int = 512) -> Tensor:
    """Instance embeddings for ``egos``; ``features`` is indexed by global node id."""
    parts = []
    for start in range(0, len(egos), chunk):
        batch = ego_batch(egos[start:start + chunk])
        H = gcn_forward(batch.adj, features[batch.node_ids], params)
        parts.append(readout(H, batch, readout_mode))
    if len(parts) == 1:
        return parts[0]
    return Tensor(np.concatenate([p.value for p in parts]))


def mlp_forward(x, params: MlpClassifierParams) -> Tensor:
    """Affine + ReLU stack; the last layer is affine only. Works on a vector or row batch."""
    h = as_tensor(x)
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = add(matmul(h, W), b)
        if i < last:
            h = relu(h)
    return h


def softmax_cross_entropy(logits, label) -> Tensor:
    """-log softmax(logits)[label]; for a row batch, the mean over rows."""
    return _ce(logits, label)


def softmax(logits: np.ndarray) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)

"""Hot numeric kernels.

Every kernel has a numba-compiled variant and a pure-numpy variant with the
same signature. The numba path is used when numba imports cleanly and the
``TAGCBM_DISABLE_NUMBA`` environment variable is unset (or ``0``).
"""
from __future__ import annotations

import os
import warnings

import numpy as np

_DISABLED = os.environ.get("TAGCBM_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    warnings.warn("numba unavailable; falling back to numpy kernels")

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return deco


USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# --- sparse (CSR) x dense ---------------------------------------------------


def spmm_numpy(indptr, indices, data, x):
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, x.shape[1]), dtype=np.float64)
    if indices.shape[0] == 0:
        return out
    prod = data[:, None] * x[indices]
    nonempty = indptr[:-1] < indptr[1:]
    starts = indptr[:-1][nonempty]
    out[nonempty] = np.add.reduceat(prod, starts, axis=0)
    return out


@njit(cache=True)
def _spmm_jit(indptr, indices, data, x):
    n_rows = indptr.shape[0] - 1
    d = x.shape[1]
    out = np.zeros((n_rows, d), dtype=np.float64)
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w = data[p]
            for c in range(d):
                out[i, c] += w * x[j, c]
    return out


def spmm_numba(indptr, indices, data, x):
    return _spmm_jit(indptr, indices, data, np.ascontiguousarray(x, dtype=np.float64))


# --- k-hop BFS on CSR ---------------------------------------------------------


def khop_distances_numpy(indptr, indices, center, k):
    """Hop distance from ``center`` for every node, -1 beyond ``k`` hops."""
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[center] = 0
    frontier = np.array([center], dtype=np.int64)
    for hop in range(1, k + 1):
        if frontier.size == 0:
            break
        nbrs = np.concatenate([indices[indptr[u]:indptr[u + 1]] for u in frontier])
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        dist[nbrs] = hop
        frontier = nbrs
    return dist


@njit(cache=True)
def _khop_jit(indptr, indices, center, k):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    dist[center] = 0
    queue[0] = center
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        if dist[u] >= k:
            continue
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue[tail] = v
                tail += 1
    return dist


def khop_distances_numba(indptr, indices, center, k):
    return _khop_jit(indptr, indices, np.int64(center), np.int64(k))


if USE_NUMBA:
    spmm = spmm_numba
    khop_distances = khop_distances_numba
else:
    spmm = spmm_numpy
    khop_distances = khop_distances_numpy

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "USE_NUMBA",
    "khop_distances",
    "khop_distances_numba",
    "khop_distances_numpy",
    "spmm",
    "spmm_numba",
    "spmm_numpy",
]

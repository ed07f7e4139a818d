"""Seeded edge perturbation for augmented views and adversarial training graphs."""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .graphcore import EgoNetwork, GraphInputError, TextAttributedGraph, ego_network


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def perturb_edge_set(edges: Iterable[tuple[int, int]], nodes: Iterable[int], drop_frac: float,
                     add_frac: float, seed=0) -> tuple[frozenset, frozenset, frozenset]:
    """Drop then add edges inside a node universe.

    Removes exactly floor(drop_frac * |E|) existing edges and adds exactly
    floor(add_frac * |E|) pairs that were not edges of the input. Returns
    ``(new_edges, dropped, added)``.
    """
    for name, frac in (("drop_frac", drop_frac), ("add_frac", add_frac)):
        if not 0.0 <= frac <= 1.0:
            raise GraphInputError(f"{name} must lie in [0, 1], got {frac}")
    rng = _rng(seed)
    original = sorted(edges)
    universe = np.array(sorted(set(nodes)), dtype=np.int64)
    n_drop = math.floor(drop_frac * len(original))
    n_add = math.floor(add_frac * len(original))
    n = universe.size
    available = n * (n - 1) // 2 - len(original)
    if n_add > available:
        raise GraphInputError(f"cannot add {n_add} edges: only {available} non-edges exist")

    drop_idx = rng.choice(len(original), size=n_drop, replace=False) if n_drop else np.zeros(0, dtype=np.int64)
    dropped = frozenset(original[i] for i in drop_idx)
    orig_set = set(original)
    added: list[tuple[int, int]] = []
    if n_add:
        if available <= 4 * n_add:
            # dense regime: enumerate the complement and sample from it directly
            complement = [(int(universe[a]), int(universe[b])) for a in range(n) for b in range(a + 1, n)
                          if (int(universe[a]), int(universe[b])) not in orig_set]
            pick = rng.choice(len(complement), size=n_add, replace=False)
            added = [complement[i] for i in pick]
        else:
            chosen = set()
            while len(added) < n_add:
                a, b = rng.integers(0, n, size=2)
                if a == b:
                    continue
                u, v = int(universe[a]), int(universe[b])
                e = (u, v) if u < v else (v, u)
                if e in orig_set or e in chosen:
                    continue
                chosen.add(e)
                added.append(e)
    added_set = frozenset(added)
    return frozenset(orig_set - dropped) | added_set, dropped, added_set


def perturb_edges(graph: TextAttributedGraph, drop_frac: float, add_frac: float, seed=0) -> TextAttributedGraph:
    new_edges, _, _ = perturb_edge_set(graph.edges, range(graph.num_nodes), drop_frac, add_frac, seed)
    return TextAttributedGraph(graph.nodes, new_edges, graph.class_names)


def view_seed(seed: int, m: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(m)]))


def make_views(graph: TextAttributedGraph, center: int, k: int, M: int, frac: float = 0.2,
               seed: int = 0) -> list[EgoNetwork]:
    """M perturbed ego-networks; each perturbs the k-hop ball, then re-extracts around the center."""
    center = graph.check_node(center)
    if M < 0:
        raise GraphInputError("view count must be non-negative")
    if M == 0:
        return []
    clean = ego_network(graph, center, k, max_neighbors=None)
    ball = np.asarray(clean.sorted_nodes, dtype=np.int64)
    ball_edges = clean.edges
    # relabel the ball to a dense local graph so ego extraction reuses the CSR path
    local = {int(u): i for i, u in enumerate(ball)}
    local_edges = frozenset((local[u], local[v]) for u, v in ball_edges)
    views = []
    for m in range(M):
        pert, _, _ = perturb_edge_set(local_edges, range(ball.size), frac, frac, view_seed(seed, m))
        sub = TextAttributedGraph.build([""] * ball.size, pert)
        ego = ego_network(sub, local[center], k, max_neighbors=None)
        views.append(EgoNetwork(
            center,
            frozenset(int(ball[i]) for i in ego.nodes),
            frozenset((int(ball[u]), int(ball[v])) for u, v in ego.edges),
            k,
        ))
    return views

"""Regular, OOD (soft label-leaveout) and adversarial splits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..augment import perturb_edge_set
from ..graphcore import TextAttributedGraph, induced_edges

DEFAULT_RATIOS = (0.2, 0.2, 0.5, 0.1)


@dataclass(frozen=True)
class SplitSpec:
    """Node ids per part, in draw order."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    heldout: np.ndarray
    setting: str = "regular"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def parts(self) -> dict[str, np.ndarray]:
        return {"train": self.train, "val": self.val, "test": self.test, "heldout": self.heldout}

    def to_json(self) -> dict:
        return {"setting": self.setting, "params": dict(self.params), "seed": self.seed,
                **{k: v.tolist() for k, v in self.parts().items()}}


def _sizes(n: int, ratios) -> tuple[int, int, int, int]:
    if len(ratios) not in (3, 4) or any(r < 0 for r in ratios) or sum(ratios) > 1 + 1e-9:
        raise ValueError(f"bad split ratios {ratios}")
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    return n_train, n_val, n_test, n - n_train - n_val - n_test


def _labeled(labels) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels, dtype=np.int64)
    ids = np.flatnonzero(y >= 0)
    return ids, y[ids]


def _split_by_keys(ids: np.ndarray, keys: np.ndarray, ratios, setting: str, params: dict, seed: int) -> SplitSpec:
    order = ids[np.argsort(keys, kind="stable")]
    a, b, c, _ = _sizes(ids.size, ratios)
    return SplitSpec(order[:a], order[a:a + b], order[a + b:a + b + c], order[a + b + c:], setting, params, seed)


def _uniform_draws(n: int, seed: int) -> np.ndarray:
    u = np.random.default_rng(seed).random(n)
    # 1 - u lies in (0, 1], so the log is finite
    return -np.log1p(-u)


def regular_split(labels, ratios=DEFAULT_RATIOS, seed: int = 0) -> SplitSpec:
    """Seeded shuffle of the labeled nodes, sliced contiguously by ``ratios``."""
    ids, _ = _labeled(labels)
    return _split_by_keys(ids, _uniform_draws(ids.size, seed), ratios, "regular", {}, seed)


def default_majority(n_classes: int) -> list[int]:
    return list(range(math.ceil(n_classes / 2)))


def ood_split(labels, gamma: float, majority_classes=None, ratios=DEFAULT_RATIOS, seed: int = 0) -> SplitSpec:
    """Weighted sampling without replacement into train/validation.

    Majority-class nodes carry weight ``gamma`` and the rest weight 1. Keys
    ``-ln(U) / w`` are sorted ascending (exponential-sort sampling), so at
    every draw a majority node is ``gamma`` times as likely as a minority
    node to be picked next. Train takes the first draws, validation the next,
    and test/heldout the remainder in the same order. With ``gamma == 1`` the
    result equals :func:`regular_split` for the same seed.
    """
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    ids, y = _labeled(labels)
    classes = np.unique(y)
    majority = default_majority(int(classes.max()) + 1) if majority_classes is None else list(majority_classes)
    if not majority:
        raise ValueError("majority class set must not be empty")
    weights = np.where(np.isin(y, majority), float(gamma), 1.0)
    keys = _uniform_draws(ids.size, seed) / weights
    return _split_by_keys(ids, keys, ratios, "ood", {"gamma": gamma, "majority": sorted(majority)}, seed)


@dataclass(frozen=True)
class AdversarialGraphs:
    train_graph: TextAttributedGraph
    dropped: frozenset
    added: frozenset
    base_edges: int


def adversarial_split(graph: TextAttributedGraph, rho: float, ratios=DEFAULT_RATIOS, seed: int = 0,
                      labels=None) -> tuple[SplitSpec, AdversarialGraphs]:
    """Regular split plus an edge-perturbed copy of the graph for training.

    Only edges with both endpoints in the training part are touched: exactly
    floor(rho * |E_train|) of them are dropped and the same number of new
    train-train pairs are added. Test nodes keep using the clean graph.
    """
    labels = graph.labels if labels is None else labels
    base = regular_split(labels, ratios, seed)
    split = SplitSpec(base.train, base.val, base.test, base.heldout, "adversarial", {"rho": rho}, seed)
    train_nodes = base.train.tolist()
    e_train = induced_edges(graph.edges, train_nodes)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAD]))
    new_train, dropped, added = perturb_edge_set(e_train, train_nodes, rho, rho, rng)
    edges = (graph.edges - e_train) | new_train
    return split, AdversarialGraphs(graph.with_edges(edges), dropped, added, len(e_train))

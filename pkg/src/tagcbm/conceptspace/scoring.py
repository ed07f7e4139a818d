"""Class-wise discriminative scoring and candidate filtering."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..embed import ConceptSet, EmbeddingTable, cosine_matrix

MAX_TOKENS = 10
LABEL_SIM_MAX = 0.85
DEDUP_SIM_MAX = 0.85
CANDIDATE_CAP = 100


@dataclass(frozen=True)
class ClasswiseActivation:
    matrix: np.ndarray   # classes x concepts
    counts: np.ndarray   # instances per class

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]


def classwise_activation(act, labels, n_classes: int | None = None) -> ClasswiseActivation:
    """Mean activation vector of each class's instances."""
    A = np.asarray(getattr(act, "values", act), dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if A.shape[0] != y.shape[0]:
        raise ValueError("one label per activation row required")
    C = int(y.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(y, minlength=C)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"classes without instances: {missing}")
    sums = np.zeros((C, A.shape[1]))
    np.add.at(sums, y, A)
    return ClasswiseActivation(sums / counts[:, None], counts)


def discriminative_score(cbar: ClasswiseActivation, j: int, y: int) -> float:
    C = cbar.n_classes
    if C < 2:
        raise ValueError("discriminative score needs at least two classes")
    col = cbar.matrix[:, j]
    return float(col[y] - (col.sum() - col[y]) / (C - 1))


def discriminative_scores(cbar: ClasswiseActivation) -> np.ndarray:
    """Score of every (class, concept) pair, same layout as ``cbar.matrix``."""
    C = cbar.n_classes
    if C < 2:
        raise ValueError("discriminative score needs at least two classes")
    M = cbar.matrix
    return M - (M.sum(axis=0, keepdims=True) - M) / (C - 1)


def topk_per_class(scores: np.ndarray, k: int, concepts: ConceptSet | None = None):
    """Union of each class's k best concepts (ties to the lower index).

    Order is class-major, score-descending within a class, first occurrence
    kept. Returns indices, or a :class:`ConceptSet` tagged ``instance`` when
    ``concepts`` is given.
    """
    S = np.asarray(scores, dtype=np.float64)
    picked: dict[int, None] = {}
    idx = np.arange(S.shape[1])
    for row in S:
        order = np.lexsort((idx, -row))[:k]
        picked.update(dict.fromkeys(int(j) for j in order))
    chosen = list(picked)
    if concepts is None:
        return chosen
    return ConceptSet(tuple(concepts[j] for j in chosen), ("instance",) * len(chosen))


def token_count(concept: str) -> int:
    return len(concept.split())


def filter_concepts(candidates: ConceptSet, class_names, table: EmbeddingTable) -> ConceptSet:
    """Drop long concepts, concepts too close to a class label, then greedy near-duplicates."""
    stage1 = [i for i, c in enumerate(candidates.concepts) if token_count(c) <= MAX_TOKENS]
    if not stage1:
        return candidates.subset([])
    vecs = table.matrix([candidates[i] for i in stage1])
    if len(class_names):
        label_sim = cosine_matrix(vecs, table.matrix(list(class_names))).max(axis=1)
        keep2 = [pos for pos in range(len(stage1)) if not label_sim[pos] > LABEL_SIM_MAX]
    else:
        keep2 = list(range(len(stage1)))
    kept: list[int] = []
    for pos in keep2:
        if kept and (vecs[kept] @ vecs[pos]).max() > DEDUP_SIM_MAX:
            continue
        kept.append(pos)
    return candidates.subset([stage1[p] for p in kept])


def assemble_candidates(global_set: ConceptSet, instance_set: ConceptSet, class_names, table: EmbeddingTable,
                        scores: Mapping[str, float] | None = None, cap: int = CANDIDATE_CAP) -> ConceptSet:
    """Filtered union (globals first). Above ``cap`` survivors, the best-scoring ``cap`` are kept in order."""
    merged = filter_concepts(global_set.union(instance_set), class_names, table)
    if len(merged) <= cap:
        return merged
    if scores is None:
        raise ValueError(f"{len(merged)} candidates exceed the cap of {cap}; scores are required")
    s = np.array([scores[c] for c in merged.concepts])
    order = np.lexsort((np.arange(len(s)), -s))[:cap]
    return merged.subset(sorted(order.tolist()))

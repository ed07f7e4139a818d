"""Sparse concept selection: sigmoid gates trained with cross-entropy plus an L1 penalty."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embed import ConceptSet, EmbeddingTable, cosine_matrix
from .graphcore import DEFAULT_HOPS, TextAttributedGraph, ego_network
from .nn import autograd as ag
from .nn.layers import GcnEncoderParams, MlpClassifierParams, encode_egos, mlp_forward
from .nn.optim import AdamState, optimizer_step

DEFAULT_BETA = 0.01


@dataclass(frozen=True)
class ActivationMatrix:
    """Cosine activations; row i is an instance, column j is concept j of ``concepts``."""

    values: np.ndarray
    concepts: ConceptSet
    instance_ids: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.concepts):
            raise ValueError(f"activation shape {v.shape} does not match {len(self.concepts)} concepts")
        if v.size and (v.min() < -1.0 or v.max() > 1.0):
            raise ValueError("activations must lie in [-1, 1]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "instance_ids", tuple(int(i) for i in self.instance_ids))

    def columns(self, idx: Sequence[int]) -> "ActivationMatrix":
        idx = [int(j) for j in idx]
        return ActivationMatrix(self.values[:, idx], self.concepts.subset(idx), self.instance_ids)

    def rows(self, ids: Sequence[int]) -> "ActivationMatrix":
        pos = {i: r for r, i in enumerate(self.instance_ids)}
        take = [pos[int(i)] for i in ids]
        return ActivationMatrix(self.values[take], self.concepts, tuple(int(i) for i in ids))


def concept_matrix(concepts: ConceptSet, table: EmbeddingTable) -> np.ndarray:
    missing = [c for c in concepts if c not in table]
    if missing:
        raise KeyError(f"concepts missing from the embedding table: {missing[:5]}")
    return table.matrix(list(concepts))


def embed_instances(graph: TextAttributedGraph, node_ids: Sequence[int], encoder: GcnEncoderParams,
                    table: EmbeddingTable, k: int = DEFAULT_HOPS, readout: str = "center",
                    max_neighbors: int | None = None) -> np.ndarray:
    """Encoder output for the ego-network of each node (the encoder sees the uncapped ego-network by default)."""
    egos = [ego_network(graph, int(u), k, max_neighbors=max_neighbors, seed=int(u)) for u in node_ids]
    feats = table.matrix(graph.texts)
    return encode_egos(egos, feats, encoder, readout).value


def activations_from_embeddings(Z: np.ndarray, concepts: ConceptSet, table: EmbeddingTable,
                                instance_ids: Sequence[int] = ()) -> ActivationMatrix:
    return ActivationMatrix(cosine_matrix(Z, concept_matrix(concepts, table)), concepts, tuple(instance_ids))


def activations(graph: TextAttributedGraph, node_ids: Sequence[int], encoder: GcnEncoderParams,
                concepts: ConceptSet, table: EmbeddingTable, k: int = DEFAULT_HOPS,
                readout: str = "center") -> ActivationMatrix:
    C = concept_matrix(concepts, table)
    Z = embed_instances(graph, node_ids, encoder, table, k, readout)
    return ActivationMatrix(cosine_matrix(Z, C), concepts, tuple(int(u) for u in node_ids))


@dataclass
class GateState:
    logits: np.ndarray
    selected: np.ndarray | None = None

    @classmethod
    def init(cls, n_concepts: int) -> "GateState":
        return cls(np.zeros(n_concepts))

    @property
    def gates(self) -> np.ndarray:
        return ag.sigmoid(self.logits).value


def _objective(A: np.ndarray, labels: np.ndarray, logits, clf: MlpClassifierParams, beta: float):
    g = ag.sigmoid(logits)
    z = ag.mul(A, g)
    ce = ag.softmax_cross_entropy(mlp_forward(z, clf), labels)
    return ag.add(ce, ag.scale(ag.sum_all(g), beta)), ce


def ib_objective(act, labels, gate: GateState, clf: MlpClassifierParams, beta: float = DEFAULT_BETA,
                 with_grads: bool = True):
    """mean CE(MLP(g * a_i), y_i) + beta * sum(g).

    Returns ``(loss, grads)`` where ``grads`` holds ``"logits"`` and the
    classifier gradients in :meth:`MlpClassifierParams.arrays` order.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    A = np.asarray(getattr(act, "values", act), dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if not with_grads:
        loss, _ = _objective(A, y, gate.logits, clf, beta)
        return float(loss.value), None
    with ag.GradientTape() as tape:
        logits = tape.watch(gate.logits)
        p = clf.watch(tape)
        loss, _ = _objective(A, y, logits, p, beta)
    grads = tape.gradient(loss, [logits, *p.arrays()])
    return float(loss.value), {"logits": grads[0], "clf": grads[1:]}


@dataclass
class GateConfig:
    epochs: int = 300
    lr: float = 5e-2
    hidden: tuple[int, ...] = (64,)
    seed: int = 0


@dataclass
class GateResult:
    gate: GateState
    classifier: MlpClassifierParams
    losses: list[float] = field(default_factory=list)


def train_gate(act, labels, beta: float = DEFAULT_BETA, config: GateConfig | None = None,
               n_classes: int | None = None) -> GateResult:
    """Full-batch joint training of gate logits and a scratch classifier."""
    cfg = config or GateConfig()
    A = np.asarray(getattr(act, "values", act), dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_classes = n_classes or int(y.max()) + 1
    gate = GateState.init(A.shape[1])
    clf = MlpClassifierParams.init(A.shape[1], n_classes, cfg.hidden, seed=cfg.seed)
    state = AdamState()
    losses = []
    for _ in range(cfg.epochs):
        loss, grads = ib_objective(A, y, gate, clf, beta)
        params = [gate.logits, *clf.arrays()]
        new, state = optimizer_step(params, [grads["logits"], *grads["clf"]], state, cfg.lr)
        gate = GateState(new[0])
        clf = clf.with_arrays(new[1:])
        losses.append(loss)
    return GateResult(gate, clf, losses)


def select_topk(gate, K: int) -> np.ndarray:
    """Indices of the K largest gates, descending, ties to the lower index."""
    g = gate.gates if isinstance(gate, GateState) else np.asarray(gate, dtype=np.float64)
    if not 1 <= K <= g.shape[0]:
        raise ValueError(f"K must lie in [1, {g.shape[0]}], got {K}")
    order = np.lexsort((np.arange(g.shape[0]), -g))[:K]
    if isinstance(gate, GateState):
        gate.selected = order
    return order


def gate_report(gate: GateState, concepts: ConceptSet, beta: float, K: int, seed: int, losses: Sequence[float]) -> dict:
    selected = set() if gate.selected is None else {int(j) for j in gate.selected}
    g = gate.gates
    return {
        "beta": beta,
        "K": K,
        "seed": seed,
        "final_loss": float(losses[-1]) if len(losses) else None,
        "concepts": [
            {"text": c, "logit": float(gate.logits[j]), "gate": float(g[j]), "selected": j in selected}
            for j, c in enumerate(concepts)
        ],
        "selected_order": [] if gate.selected is None else [int(j) for j in gate.selected],
    }

"""Set-to-set contrastive pretraining of the graph encoder against frozen concept embeddings."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import make_views
from .embed import EmbeddingTable
from .graphcore import DEFAULT_HOPS, EgoNetwork, TextAttributedGraph, ego_network
from .nn import autograd as ag
from .nn.layers import GcnEncoderParams, ego_batch, gcn_forward, readout
from .nn.optim import AdamState, optimizer_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PretrainInstance:
    instance_id: int
    ego: EgoNetwork
    views: tuple[EgoNetwork, ...]
    concepts: tuple[str, ...]

    def __post_init__(self):
        if not self.views:
            raise ValueError(f"instance {self.instance_id} has no augmented views")
        if not self.concepts:
            raise ValueError(f"instance {self.instance_id} has no concepts")


@dataclass
class PretrainDomain:
    """Instances drawn from one source graph plus that graph's node features."""

    graph: TextAttributedGraph
    instances: list[PretrainInstance]
    name: str = ""

    def features(self, table: EmbeddingTable) -> np.ndarray:
        return table.matrix(self.graph.texts)


def build_instances(graph: TextAttributedGraph, centers: Sequence[int], concept_lists: Sequence[Sequence[str]],
                    k: int = DEFAULT_HOPS, views: int = 10, frac: float = 0.2, seed: int = 0) -> list[PretrainInstance]:
    out = []
    for c, concepts in zip(centers, concept_lists):
        c = int(c)
        out.append(PretrainInstance(
            c,
            ego_network(graph, c, k, max_neighbors=None),
            tuple(make_views(graph, c, k, views, frac, seed=_instance_seed(seed, c))),
            tuple(concepts),
        ))
    return out


def _instance_seed(seed: int, center: int) -> int:
    return int(np.random.SeedSequence([int(seed), center]).generate_state(1)[0])


@dataclass
class PairBatch:
    """Positive (view, concept) pairs; ``pairs[p] = (instance, view index, concept index)``."""

    pairs: np.ndarray
    subsets: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = field(default_factory=dict)
    graph_emb: np.ndarray | None = None
    concept_emb: np.ndarray | None = None

    def __len__(self) -> int:
        return self.pairs.shape[0]

    @property
    def instance_ids(self) -> np.ndarray:
        return self.pairs[:, 0]


def sample_pairs(instances: Sequence[PretrainInstance], views_per_instance: int = 2, concepts_per_instance: int = 2,
                 batch_size: int = 256, seed=0) -> PairBatch:
    """Fill a batch with Cartesian products of per-instance view/concept subsets.

    Instances are visited in a seeded random order. Each visited instance
    contributes the full product of its sampled subsets; the instance that
    would overflow the batch is truncated only when it is the first one.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if not instances:
        raise ValueError("no instances to sample from")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rows: list[tuple[int, int, int]] = []
    subsets = {}
    for i in rng.permutation(len(instances)):
        inst = instances[i]
        ms = np.sort(rng.choice(len(inst.views), size=min(views_per_instance, len(inst.views)), replace=False))
        ks = np.sort(rng.choice(len(inst.concepts), size=min(concepts_per_instance, len(inst.concepts)),
                                replace=False))
        prod = [(int(i), int(m), int(j)) for m in ms for j in ks]
        if rows and len(rows) + len(prod) > batch_size:
            break
        rows.extend(prod[:batch_size - len(rows)])
        subsets[int(i)] = (tuple(int(m) for m in ms), tuple(int(j) for j in ks))
        if len(rows) == batch_size:
            break
    return PairBatch(np.array(rows, dtype=np.int64).reshape(-1, 3), subsets)


def info_nce_loss(z, concept_emb: np.ndarray, tau: float, instance_ids: np.ndarray | None = None,
                  exclude_positives: bool = False) -> ag.Tensor:
    """Mean over pairs of -log softmax over every concept in the batch, positive at the diagonal.

    ``z`` holds raw graph embeddings (one row per pair); both sides are L2
    normalized so the logits are cosine / tau.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = ag.as_tensor(z)
    c = np.asarray(concept_emb, dtype=np.float64)
    c = c / np.linalg.norm(c, axis=1, keepdims=True)
    logits = ag.scale(ag.matmul(ag.l2_normalize_rows(z), c.T), 1.0 / tau)
    P = c.shape[0]
    if exclude_positives:
        if instance_ids is None:
            raise ValueError("exclude_positives needs instance ids")
        same = (instance_ids[:, None] == instance_ids[None, :]) & ~np.eye(P, dtype=bool)
        logits = ag.add(logits, np.where(same, -np.inf, 0.0))
    return ag.softmax_cross_entropy(logits, np.arange(P))


def info_nce(batch: PairBatch, tau: float = 0.07, exclude_positives: bool = False) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to ``batch.graph_emb``."""
    if batch.graph_emb is None or batch.concept_emb is None:
        raise ValueError("batch embeddings are not filled in")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    with ag.GradientTape() as tape:
        z = tape.watch(batch.graph_emb)
        loss = info_nce_loss(z, batch.concept_emb, tau, batch.instance_ids, exclude_positives)
    (grad,) = tape.gradient(loss, [z])
    return float(loss.value), grad


@dataclass
class PretrainConfig:
    steps: int = 300
    lr: float = 1e-3
    tau: float = 0.07
    views: int = 10
    view_frac: float = 0.2
    views_per_instance: int = 2
    concepts_per_instance: int = 2
    batch_size: int = 256
    hidden: int = 64
    hops: int = DEFAULT_HOPS
    readout: str = "center"
    exclude_positives: bool = False
    seed: int = 0


@dataclass
class PretrainResult:
    params: GcnEncoderParams
    losses: list[float]


def pretrain(domains: Sequence[PretrainDomain], table: EmbeddingTable,
             config: PretrainConfig | None = None) -> PretrainResult:
    cfg = config or PretrainConfig()
    pool = [(d, inst) for d, dom in enumerate(domains) for inst in dom.instances]
    if not pool:
        raise ValueError("empty pretraining set")
    feats = [dom.features(table) for dom in domains]
    params = GcnEncoderParams.init(table.dim, table.dim, seed=cfg.seed, hidden=cfg.hidden)
    state = AdamState()
    instances = [inst for _, inst in pool]
    losses = []
    for step in range(cfg.steps):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, step]))
        batch = sample_pairs(instances, cfg.views_per_instance, cfg.concepts_per_instance, cfg.batch_size, rng)
        view_keys, view_of_pair = np.unique(batch.pairs[:, :2], axis=0, return_inverse=True)
        egos = [pool[i][1].views[m] for i, m in view_keys]
        X = np.concatenate([feats[pool[i][0]][list(ego.sorted_nodes)] for (i, _), ego in zip(view_keys, egos)])
        concept_emb = np.stack([table[pool[i][1].concepts[j]] for i, _, j in batch.pairs])
        eb = ego_batch(egos)
        with ag.GradientTape() as tape:
            p = params.watch(tape)
            z_views = readout(gcn_forward(eb.adj, X, p), eb, cfg.readout)
            z = ag.take_rows(z_views, view_of_pair.reshape(-1))
            loss = info_nce_loss(z, concept_emb, cfg.tau, batch.instance_ids, cfg.exclude_positives)
        grads = tape.gradient(loss, p.arrays())
        new, state = optimizer_step(params.arrays(), grads, state, cfg.lr)
        params = params.with_arrays(new)
        losses.append(float(loss.value))
        if step % 50 == 0:
            log.debug("pretrain step %d loss %.4f", step, losses[-1])
    return PretrainResult(params, losses)

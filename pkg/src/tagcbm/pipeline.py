"""Stage orchestration shared by the CLI, the leakage probe and the acceptance suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ccgp import PretrainConfig, PretrainDomain, PretrainResult, build_instances, pretrain
from .conceptspace.llm import LlmClient
from .conceptspace.retrieval import (
    annotate_instance,
    mine_instance_concepts,
    prompt_graphml,
    propose_all_global,
    sample_per_class,
)
from .conceptspace.scoring import (
    CANDIDATE_CAP,
    assemble_candidates,
    classwise_activation,
    discriminative_scores,
    topk_per_class,
)
from .embed import ConceptSet, EmbeddingTable
from .evalbench.splits import SplitSpec
from .evalbench.synth import (
    SYNTH_DETAILS,
    SYNTH_DOMAIN,
    SimulatedLLM,
    SynthConfig,
    synth_planted,
    synthetic_vocabulary,
)
from .graphcore import DEFAULT_HOPS, DEFAULT_MAX_NEIGHBORS, TextAttributedGraph, induced_edges
from .ibgate import (
    DEFAULT_BETA,
    GateConfig,
    GateResult,
    activations_from_embeddings,
    embed_instances,
    select_topk,
    train_gate,
)
from .metrics import MetricReport, metric_report
from .nn.layers import GcnEncoderParams
from .predictor import PredictorConfig, PredictorResult, predict_from_activations, train_predictor

log = logging.getLogger(__name__)


# --- data -------------------------------------------------------------------


@dataclass
class World:
    """Target graph, pretraining source graph, and one embedding table covering both plus all concepts."""

    graph: TextAttributedGraph
    source: TextAttributedGraph
    table: EmbeddingTable
    simulator: SimulatedLLM | None = None


SOURCE_SEED_OFFSET = 1000


def synthetic_world(config: SynthConfig) -> World:
    """Planted-concept target, a source graph sharing its concepts, and the matching simulated LLM."""
    concept_seed = config.seed if config.concept_seed is None else config.concept_seed
    target = synth_planted(config, concept_seed=concept_seed)
    source = synth_planted(config, seed=config.seed + SOURCE_SEED_OFFSET, concept_seed=concept_seed)
    vocab = synthetic_vocabulary(target, seed=config.seed)
    table = vocab.table.merged(source.table)
    return World(target.graph, source.graph, table, SimulatedLLM(vocab, texts=table))


# --- pretraining --------------------------------------------------------------


def annotate_graph(graph: TextAttributedGraph, client: LlmClient, dataset_details: str = SYNTH_DETAILS,
                   nodes: Sequence[int] | None = None, k: int = DEFAULT_HOPS,
                   max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS) -> list[list[str]]:
    nodes = range(graph.num_nodes) if nodes is None else nodes
    return [annotate_instance(prompt_graphml(graph, int(u), k, max_neighbors), dataset_details, client)
            for u in nodes]


def pretrain_encoder(source: TextAttributedGraph, table: EmbeddingTable, client: LlmClient,
                     config: PretrainConfig | None = None, dataset_details: str = SYNTH_DETAILS) -> PretrainResult:
    """Annotate every source node, build its augmented views, and run contrastive pretraining."""
    cfg = config or PretrainConfig()
    centers = list(range(source.num_nodes))
    lists = annotate_graph(source, client, dataset_details, centers, cfg.hops)
    keep = [(c, l) for c, l in zip(centers, lists) if l]
    instances = build_instances(source, [c for c, _ in keep], [l for _, l in keep], cfg.hops, cfg.views,
                                cfg.view_frac, cfg.seed)
    return pretrain([PretrainDomain(source, instances, "source")], table, cfg)


# --- embeddings ---------------------------------------------------------------


def inductive_graph(graph: TextAttributedGraph, split: SplitSpec) -> TextAttributedGraph:
    """The graph with every edge touching a test or heldout node removed."""
    seen = np.concatenate([split.train, split.val]).tolist()
    return graph.with_edges(induced_edges(graph.edges, seen))


@dataclass
class SplitEmbeddings:
    """Encoder outputs per split part; train/val come from the training graph, test from the clean graph."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    y_train: np.ndarray
    y_val: np.ndarray
    y_test: np.ndarray
    n_classes: int


def embed_split(graph: TextAttributedGraph, split: SplitSpec, encoder: GcnEncoderParams, table: EmbeddingTable,
                train_graph: TextAttributedGraph | None = None, k: int = DEFAULT_HOPS,
                readout: str = "center") -> SplitEmbeddings:
    seen = inductive_graph(train_graph if train_graph is not None else graph, split)
    y = graph.labels
    return SplitEmbeddings(
        embed_instances(seen, split.train, encoder, table, k, readout),
        embed_instances(seen, split.val, encoder, table, k, readout),
        embed_instances(graph, split.test, encoder, table, k, readout),
        y[split.train], y[split.val], y[split.test], graph.num_classes,
    )


# --- concept set --------------------------------------------------------------


@dataclass
class ConceptConfig:
    samples_per_class: int = 10
    instance_topk: int = 10
    cap: int = CANDIDATE_CAP
    dataset_domain: str = SYNTH_DOMAIN
    dataset_details: str = SYNTH_DETAILS
    max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS
    seed: int = 0


def _known(concepts: Sequence[str], table: EmbeddingTable, what: str) -> list[str]:
    missing = [c for c in concepts if c not in table]
    if missing:
        log.warning("dropping %d %s concepts without embeddings, e.g. %r", len(missing), what, missing[0])
    return [c for c in concepts if c in table]


def collect_concepts(prompt_graph: TextAttributedGraph, train_ids: Sequence[int], client: LlmClient,
                     config: ConceptConfig | None = None, k: int = DEFAULT_HOPS) -> tuple[list[str], list[str]]:
    """Every LLM request of the concept stage: global proposals, then instance extraction.

    ``prompt_graph`` supplies the GraphML payloads; pass the training graph
    so no test node text reaches a prompt.
    """
    cfg = config or ConceptConfig()
    globals_ = propose_all_global(cfg.dataset_domain, prompt_graph.class_names, client)
    sampled = sample_per_class(prompt_graph.labels, train_ids, cfg.samples_per_class, cfg.seed)
    pool = mine_instance_concepts(prompt_graph, sampled, client, cfg.dataset_details, cfg.dataset_domain, k,
                                  cfg.max_neighbors)
    return globals_, pool


def score_candidates(graph: TextAttributedGraph, train_ids: Sequence[int], Z_train: np.ndarray,
                     global_concepts: Sequence[str], pool: Sequence[str], table: EmbeddingTable,
                     config: ConceptConfig | None = None) -> ConceptSet:
    """Keep the top discriminative pool concepts per class, merge with the globals, filter and cap.

    ``Z_train`` holds encoder outputs for ``train_ids``; it drives both the
    instance-concept selection and the cap ranking.
    """
    cfg = config or ConceptConfig()
    y_train = graph.labels[np.asarray(train_ids, dtype=np.int64)]
    globals_ = ConceptSet.from_strings(_known(global_concepts, table, "global"), "global")
    pool_set = ConceptSet.from_strings(_known(pool, table, "instance"), "instance")
    everything = globals_.union(pool_set)
    act = activations_from_embeddings(Z_train, everything, table)
    scores = discriminative_scores(classwise_activation(act, y_train, graph.num_classes))
    if len(pool_set):
        pool_idx = [everything.index(c) for c in pool_set]
        chosen = topk_per_class(scores[:, pool_idx], cfg.instance_topk)
        instance_set = ConceptSet(tuple(pool_set[j] for j in chosen), ("instance",) * len(chosen))
    else:
        instance_set = ConceptSet()
    best = dict(zip(everything.concepts, scores.max(axis=0).tolist()))
    return assemble_candidates(globals_, instance_set, graph.class_names, table, best, cfg.cap)


def build_candidates(graph: TextAttributedGraph, train_ids: Sequence[int], Z_train: np.ndarray,
                     table: EmbeddingTable, client: LlmClient, config: ConceptConfig | None = None,
                     k: int = DEFAULT_HOPS, prompt_graph: TextAttributedGraph | None = None) -> ConceptSet:
    globals_, pool = collect_concepts(prompt_graph or graph, train_ids, client, config, k)
    return score_candidates(graph, train_ids, Z_train, globals_, pool, table, config)


# --- gate + predictor ---------------------------------------------------------


@dataclass
class FitResult:
    gate: GateResult
    selected: np.ndarray
    predictor: PredictorResult
    report: MetricReport
    predictions: np.ndarray = field(repr=False, default=None)


def fit_gate(emb: SplitEmbeddings, concepts: ConceptSet, table: EmbeddingTable, beta: float = DEFAULT_BETA,
             config: GateConfig | None = None) -> GateResult:
    act = activations_from_embeddings(emb.train, concepts, table)
    return train_gate(act, emb.y_train, beta, config, emb.n_classes)


def fit_predictor(emb: SplitEmbeddings, concepts: ConceptSet, table: EmbeddingTable, gate: GateResult, K: int,
                  config: PredictorConfig | None = None, setting: dict | None = None) -> FitResult:
    sel = select_topk(gate.gate.gates, min(K, len(concepts)))
    chosen = concepts.subset(sel)
    a_tr, a_va, a_te = (activations_from_embeddings(Z, chosen, table) for Z in (emb.train, emb.val, emb.test))
    pred = train_predictor(a_tr, emb.y_train, a_va, emb.y_val, config, emb.n_classes)
    cls, _ = predict_from_activations(a_te, pred.classifier)
    report = metric_report(cls, emb.y_test, emb.n_classes, setting)
    return FitResult(gate, sel, pred, report, cls)


def fit_concept_model(emb: SplitEmbeddings, concepts: ConceptSet, table: EmbeddingTable, K: int,
                      beta: float = DEFAULT_BETA, gate_config: GateConfig | None = None,
                      predictor_config: PredictorConfig | None = None, setting: dict | None = None) -> FitResult:
    gate = fit_gate(emb, concepts, table, beta, gate_config)
    return fit_predictor(emb, concepts, table, gate, K, predictor_config, setting)

"""Planted-concept synthetic graphs and a simulated LLM annotator for offline runs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..conceptspace.llm import FixtureStore, RecordingClient
from ..conceptspace.retrieval import (
    annotate_instance,
    extract_instance,
    prompt_graphml,
    propose_global,
)
from ..embed import ConceptSet, EmbeddingTable
from ..graphcore import DEFAULT_HOPS, DEFAULT_MAX_NEIGHBORS, TextAttributedGraph, from_graphml

SYNTH_DOMAIN = "synthetic planted-concept graph"
SYNTH_DETAILS = ("Each node is a document whose text embedding mixes the concepts of its class with noise; "
                 "edges are sampled with class homophily.")


@dataclass
class SynthConfig:
    classes: int = 4
    concepts_per_class: int = 3
    nodes_per_class: int = 100
    sigma: float = 0.3
    p_in: float = 0.05
    p_out: float = 0.005
    dim: int = 64
    distractors: int = 12
    seed: int = 0
    concept_seed: int | None = None


@dataclass
class SynthDataset:
    graph: TextAttributedGraph
    table: EmbeddingTable
    planted: dict[int, list[str]]
    distractors: list[str]
    config: SynthConfig
    vectors: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def concepts(self) -> ConceptSet:
        planted = [c for y in sorted(self.planted) for c in self.planted[y]]
        return ConceptSet(tuple(planted + self.distractors),
                          ("planted",) * len(planted) + ("distractor",) * len(self.distractors))

    def centroids(self) -> np.ndarray:
        return np.stack([np.mean([self.vectors[c] for c in self.planted[y]], axis=0) for y in sorted(self.planted)])


def _concept_vectors(cfg: SynthConfig) -> tuple[dict[int, list[str]], list[str], dict[str, np.ndarray]]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed if cfg.concept_seed is None else cfg.concept_seed,
                                                        0xC0]))
    n_planted = cfg.classes * cfg.concepts_per_class
    if n_planted <= cfg.dim:
        q, _ = np.linalg.qr(rng.standard_normal((cfg.dim, cfg.dim)))
        planted_vecs = q[:, :n_planted].T
    else:
        planted_vecs = rng.standard_normal((n_planted, cfg.dim))
        planted_vecs /= np.linalg.norm(planted_vecs, axis=1, keepdims=True)
    distractor_vecs = rng.standard_normal((cfg.distractors, cfg.dim))
    distractor_vecs /= np.linalg.norm(distractor_vecs, axis=1, keepdims=True)
    planted, vectors = {}, {}
    for y in range(cfg.classes):
        names = [f"class{y}_concept{j}" for j in range(cfg.concepts_per_class)]
        planted[y] = names
        for j, name in enumerate(names):
            vectors[name] = planted_vecs[y * cfg.concepts_per_class + j]
    distractors = [f"distractor{j}" for j in range(cfg.distractors)]
    vectors.update(zip(distractors, distractor_vecs))
    return planted, distractors, vectors


def synth_planted(config: SynthConfig | None = None, **overrides) -> SynthDataset:
    """Homophilous graph whose node texts embed near their class's planted concepts.

    Node embedding = normalize(mean of the class's concept vectors + N(0, sigma^2 I)).
    Class-label embeddings are the normalized class centroids. Concept vectors
    depend on ``concept_seed`` (default ``seed``) so several graphs can share
    one concept vocabulary.
    """
    cfg = config or SynthConfig()
    if overrides:
        cfg = SynthConfig(**{**asdict(cfg), **overrides})
    planted, distractors, vectors = _concept_vectors(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x6A]))
    C, n = cfg.classes, cfg.nodes_per_class
    labels = np.repeat(np.arange(C), n)
    centroids = np.stack([np.mean([vectors[c] for c in planted[y]], axis=0) for y in range(C)])
    X = centroids[labels] + cfg.sigma * rng.standard_normal((C * n, cfg.dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)

    N = C * n
    iu, ju = np.triu_indices(N, k=1)
    p = np.where(labels[iu] == labels[ju], cfg.p_in, cfg.p_out)
    hit = rng.random(iu.size) < p
    edges = list(zip(iu[hit].tolist(), ju[hit].tolist()))

    texts = [f"doc{cfg.seed}_{i}" for i in range(N)]
    class_names = [f"class{y}" for y in range(C)]
    entries = dict(zip(texts, X))
    entries.update(zip(class_names, centroids))
    entries.update(vectors)
    graph = TextAttributedGraph.build(texts, edges, labels.tolist(), class_names)
    return SynthDataset(graph, EmbeddingTable(cfg.dim, entries), planted, distractors, cfg, vectors)


# --- simulated LLM ------------------------------------------------------------


@dataclass
class Vocabulary:
    """Concept strings the simulated LLM can emit, with per-class global proposals."""

    table: EmbeddingTable
    concepts: list[str]
    global_lists: dict[str, list[str]]


def synthetic_vocabulary(ds: SynthDataset, facets_per_concept: int = 3, facet_cos: float = 0.7,
                         seed: int = 0) -> Vocabulary:
    """Planted concepts, their related facets, and distractors.

    A facet of concept c is ``facet_cos * c + sqrt(1 - facet_cos^2) * r`` for
    a random unit r orthogonal to c. Each class's global proposal lists its
    planted concepts, their facets, and an equal share of the distractors.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFA]))
    extra = {}
    lists: dict[str, list[str]] = {}
    for y in sorted(ds.planted):
        names = []
        for c in ds.planted[y]:
            names.append(c)
            v = ds.vectors[c]
            for r in range(facets_per_concept):
                noise = rng.standard_normal(v.shape)
                noise -= (noise @ v) * v
                noise /= np.linalg.norm(noise)
                name = f"{c}_facet{r}"
                extra[name] = facet_cos * v + np.sqrt(1 - facet_cos ** 2) * noise
                names.append(name)
        lists[ds.graph.class_names[y]] = names
    for i, d in enumerate(ds.distractors):
        lists[ds.graph.class_names[i % len(lists)]].append(d)
    table = ds.table.merged(extra)
    concepts = [c for name in ds.graph.class_names for c in lists[name]]
    return Vocabulary(table, concepts, lists)


class SimulatedLLM:
    """Offline stand-in for the concept-mining LLM.

    Global prompts return a fixed per-class list. Instance and annotation
    prompts read the GraphML payload, average the embeddings of the node
    texts (looked up in ``texts``, default the vocabulary table), and answer
    with the ``top`` vocabulary concepts closest to that mean.
    """

    def __init__(self, vocab: Vocabulary, top: int = 10, texts: EmbeddingTable | None = None):
        self.vocab = vocab
        self.top = top
        self.texts = texts or vocab.table
        self._C = vocab.table.matrix(vocab.concepts)

    def query(self, template_id: str, payload: Mapping[str, str]) -> list[str]:
        if template_id == "global_v1":
            return list(self.vocab.global_lists.get(payload["category"], []))
        if template_id in ("instance_v1", "annotation_v1"):
            _, texts = from_graphml(payload["graphml"])
            mean = self.texts.matrix(list(texts.values())).mean(axis=0)
            sims = self._C @ mean
            order = np.lexsort((np.arange(sims.size), -sims))[:self.top]
            return [self.vocab.concepts[j] for j in order]
        raise KeyError(f"simulated LLM has no answer for template {template_id!r}")


def write_synthetic_fixtures(store: FixtureStore, llm: SimulatedLLM, graphs: Sequence[TextAttributedGraph],
                             dataset_domain: str = SYNTH_DOMAIN, dataset_details: str = SYNTH_DETAILS,
                             k: int = DEFAULT_HOPS, max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS) -> int:
    """Record every request the pipeline can issue for ``graphs``; returns the store size."""
    client = RecordingClient(llm, store)
    for graph in graphs:
        for name in graph.class_names:
            propose_global(dataset_domain, name, client)
        for node in range(graph.num_nodes):
            doc = prompt_graphml(graph, node, k, max_neighbors)
            extract_instance(doc, dataset_details, graph.class_names, client, dataset_domain)
            annotate_instance(doc, dataset_details, client)
    return len(store)

"""Global and instance-based concept proposals."""
from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np

from ..graphcore import DEFAULT_HOPS, DEFAULT_MAX_NEIGHBORS, TextAttributedGraph, ego_network, to_graphml
from .llm import LlmClient

log = logging.getLogger(__name__)


def _clean(items) -> list[str]:
    out = [str(s).strip() for s in items]
    return [s for s in out if s]


def global_payload(dataset_domain: str, category: str) -> dict:
    return {"dataset_domain": dataset_domain, "category": category}


def instance_payload(subgraph_doc: str, dataset_details: str, category_list: Sequence[str],
                     dataset_domain: str = "") -> dict:
    return {
        "graphml": subgraph_doc,
        "dataset_details": dataset_details,
        "dataset_domain": dataset_domain,
        "category_list": ", ".join(category_list),
    }


def annotation_payload(subgraph_doc: str, dataset_details: str) -> dict:
    return {"graphml": subgraph_doc, "dataset_details": dataset_details}


def propose_global(dataset_domain: str, category: str, client: LlmClient) -> list[str]:
    concepts = _clean(client.query("global_v1", global_payload(dataset_domain, category)))
    if not concepts:
        log.warning("global proposal for %r returned no concepts", category)
    return concepts


def propose_all_global(dataset_domain: str, class_names: Sequence[str], client: LlmClient) -> list[str]:
    """Union over every class, first occurrence kept."""
    out: dict[str, None] = {}
    for name in class_names:
        out.update(dict.fromkeys(propose_global(dataset_domain, name, client)))
    return list(out)


def extract_instance(subgraph_doc: str, dataset_details: str, category_list: Sequence[str], client: LlmClient,
                     dataset_domain: str = "") -> list[str]:
    payload = instance_payload(subgraph_doc, dataset_details, category_list, dataset_domain)
    concepts = _clean(client.query("instance_v1", payload))
    if not concepts:
        log.warning("instance extraction returned no concepts")
    return concepts


def annotate_instance(subgraph_doc: str, dataset_details: str, client: LlmClient) -> list[str]:
    """Label-free concept annotation used to build pretraining concept lists."""
    return _clean(client.query("annotation_v1", annotation_payload(subgraph_doc, dataset_details)))


def prompt_graphml(graph: TextAttributedGraph, node: int, k: int = DEFAULT_HOPS,
                   max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS) -> str:
    """GraphML payload for ``node``; the neighbor sample is seeded by the node id."""
    ego = ego_network(graph, node, k, max_neighbors=max_neighbors, seed=node)
    return to_graphml(ego, graph.texts)


def sample_per_class(labels: np.ndarray, candidates: Sequence[int], m: int, seed: int = 0) -> dict[int, list[int]]:
    """Up to ``m`` candidate nodes per class, uniformly without replacement."""
    rng = np.random.default_rng(seed)
    cand = np.asarray(sorted(int(c) for c in candidates), dtype=np.int64)
    out = {}
    for y in np.unique(labels[cand]):
        if y < 0:
            continue
        pool = cand[labels[cand] == y]
        pick = rng.choice(pool, size=min(m, pool.size), replace=False)
        out[int(y)] = sorted(int(p) for p in pick)
    return out


def mine_instance_concepts(graph: TextAttributedGraph, sampled: Mapping[int, Sequence[int]], client: LlmClient,
                           dataset_details: str, dataset_domain: str = "", k: int = DEFAULT_HOPS,
                           max_neighbors: int | None = DEFAULT_MAX_NEIGHBORS) -> list[str]:
    """Pool of concepts extracted from every sampled instance, first occurrence kept."""
    pool: dict[str, None] = {}
    for y in sorted(sampled):
        for node in sampled[y]:
            doc = prompt_graphml(graph, node, k, max_neighbors)
            pool.update(dict.fromkeys(extract_instance(doc, dataset_details, graph.class_names, client,
                                                       dataset_domain)))
    return list(pool)

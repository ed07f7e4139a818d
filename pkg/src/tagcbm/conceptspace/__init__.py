"""Candidate concept construction: LLM proposals, discriminative scoring, filtering."""
from .llm import (
    FixtureMissingError,
    FixtureStore,
    LiveCallRefused,
    LiveClient,
    RecordingClient,
    RefusingClient,
    ReplayClient,
    parse_concept_list,
    render,
    request_digest,
)
from .retrieval import (
    annotate_instance,
    extract_instance,
    mine_instance_concepts,
    prompt_graphml,
    propose_all_global,
    propose_global,
    sample_per_class,
)
from .scoring import (
    ClasswiseActivation,
    assemble_candidates,
    classwise_activation,
    discriminative_score,
    discriminative_scores,
    filter_concepts,
    topk_per_class,
)

__all__ = [
    "ClasswiseActivation",
    "FixtureMissingError",
    "FixtureStore",
    "LiveCallRefused",
    "LiveClient",
    "RecordingClient",
    "RefusingClient",
    "ReplayClient",
    "annotate_instance",
    "assemble_candidates",
    "classwise_activation",
    "discriminative_score",
    "discriminative_scores",
    "extract_instance",
    "filter_concepts",
    "mine_instance_concepts",
    "parse_concept_list",
    "prompt_graphml",
    "propose_all_global",
    "propose_global",
    "render",
    "request_digest",
    "sample_per_class",
    "topk_per_class",
]

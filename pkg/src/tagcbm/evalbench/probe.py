"""Random-concept leakage probe: the same gate + predictor trained on semantics-free concepts."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..embed import ConceptSet, EmbeddingTable, random_concepts
from ..graphcore import DEFAULT_HOPS, TextAttributedGraph
from ..ibgate import DEFAULT_BETA, GateConfig
from ..nn.layers import GcnEncoderParams
from ..predictor import PredictorConfig
from .splits import ood_split, regular_split

DEFAULT_K_VALUES = (5, 10, 20, 40)
DEFAULT_SETTINGS = (("regular", None), ("ood", 5.0))


@dataclass
class ProbeRow:
    setting: str
    param: float | None
    K: int
    seed: int
    true_f1: float
    random_f1: float
    true_bacc: float
    random_bacc: float

    @property
    def gap(self) -> float:
        return self.true_f1 - self.random_f1


@dataclass
class ProbeReport:
    rows: list[ProbeRow] = field(default_factory=list)

    def merge(self, other: "ProbeReport") -> "ProbeReport":
        return ProbeReport(self.rows + other.rows)

    def summary(self) -> list[dict]:
        """Seed-averaged Macro-F1 per (setting, K), in first-seen order."""
        groups: dict[tuple, list[ProbeRow]] = {}
        for r in self.rows:
            groups.setdefault((r.setting, r.param, r.K), []).append(r)
        out = []
        for (setting, param, K), rows in groups.items():
            t = float(np.mean([r.true_f1 for r in rows]))
            rnd = float(np.mean([r.random_f1 for r in rows]))
            out.append({"setting": setting, "param": param, "K": K, "seeds": [r.seed for r in rows],
                        "true_f1": t, "random_f1": rnd, "gap": t - rnd})
        return out

    def mean_gap(self, setting: str, K: int) -> float:
        return float(np.mean([r.gap for r in self.rows if r.setting == setting and r.K == K]))

    def to_json(self) -> dict:
        return {"rows": [{**asdict(r), "gap": r.gap} for r in self.rows], "summary": self.summary()}

    def csv_records(self) -> list[dict]:
        recs = []
        for r in self.rows:
            for variant, f1, ba in (("true", r.true_f1, r.true_bacc), ("random", r.random_f1, r.random_bacc)):
                recs.append({"setting": f"{r.setting}/{variant}", "param": r.param, "K": r.K, "seed": r.seed,
                             "macro_f1": f1, "bacc": ba})
        return recs


def _split_for(labels, setting: str, param, seed: int):
    if setting == "regular":
        return regular_split(labels, seed=seed)
    if setting == "ood":
        return ood_split(labels, float(param), seed=seed)
    raise ValueError(f"probe supports regular and ood settings, got {setting!r}")


def leakage_probe(graph: TextAttributedGraph, table: EmbeddingTable, encoder: GcnEncoderParams,
                  candidates: ConceptSet, K_values: Sequence[int] = DEFAULT_K_VALUES, seeds: Sequence[int] = (0,),
                  settings=DEFAULT_SETTINGS, beta: float = DEFAULT_BETA, gate_config: GateConfig | None = None,
                  predictor_config: PredictorConfig | None = None, k: int = DEFAULT_HOPS,
                  readout: str = "center") -> ProbeReport:
    """Macro-F1 of C^candidate vs ``random_concepts(|C^candidate|)`` per (setting, K, seed).

    The gate is trained once per (setting, seed, variant) and reused for
    every K; each K gets its own predictor. Random concepts are drawn with
    the run seed.
    """
    from ..pipeline import embed_split, fit_gate, fit_predictor

    gate_config = gate_config or GateConfig()
    predictor_config = predictor_config or PredictorConfig()
    rows = []
    for seed in seeds:
        gc = GateConfig(**{**asdict(gate_config), "seed": seed})
        pc = PredictorConfig(**{**asdict(predictor_config), "seed": seed})
        rnd, rnd_table = random_concepts(len(candidates), table.dim, seed)
        for setting, param in settings:
            split = _split_for(graph.labels, setting, param, seed)
            emb = embed_split(graph, split, encoder, table, k=k, readout=readout)
            gate_true = fit_gate(emb, candidates, table, beta, gc)
            gate_rnd = fit_gate(emb, rnd, rnd_table, beta, gc)
            for K in K_values:
                if K > len(candidates):
                    continue
                t = fit_predictor(emb, candidates, table, gate_true, K, pc).report
                r = fit_predictor(emb, rnd, rnd_table, gate_rnd, K, pc).report
                rows.append(ProbeRow(setting, param, int(K), int(seed), t.macro_f1, r.macro_f1, t.bacc, r.bacc))
    return ProbeReport(rows)

"""Label predictor over selected concept activations, plus explanations."""
from __future__ import annotations

import html
import json
import re
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .embed import ConceptSet, EmbeddingTable
from .graphcore import DEFAULT_HOPS, TextAttributedGraph
from .ibgate import activations
from .metrics import macro_f1
from .nn import autograd as ag
from .nn.layers import GcnEncoderParams, MlpClassifierParams, mlp_forward, softmax
from .nn.optim import AdamState, optimizer_step


@dataclass
class PredictorConfig:
    hidden: tuple[int, ...] = (64,)
    lr: float = 1e-2
    max_epochs: int = 500
    patience: int = 20
    seed: int = 0


@dataclass
class PredictorResult:
    classifier: MlpClassifierParams
    best_epoch: int
    best_val_f1: float
    history: list[tuple[float, float]] = field(default_factory=list)  # (train loss, val macro-F1)


def _values(a):
    return np.asarray(getattr(a, "values", a), dtype=np.float64)


def train_predictor(act_train, y_train, act_val, y_val, config: PredictorConfig | None = None,
                    n_classes: int | None = None) -> PredictorResult:
    """Full-batch cross-entropy training with early stopping on validation Macro-F1.

    A checkpoint counts as better when its validation Macro-F1 is higher, or
    equal with a lower validation loss.
    """
    cfg = config or PredictorConfig()
    A, y = _values(act_train), np.asarray(y_train, dtype=np.int64)
    Av, yv = _values(act_val), np.asarray(y_val, dtype=np.int64)
    if A.shape[1] == 0:
        raise ValueError("predictor needs at least one selected concept")
    if Av.shape[0] == 0:
        raise ValueError("a validation set is required for early stopping")
    C = n_classes or int(max(y.max(), yv.max())) + 1
    clf = MlpClassifierParams.init(A.shape[1], C, cfg.hidden, seed=cfg.seed)
    state = AdamState()
    best = (clf, -1, -1.0, np.inf)
    history = []
    stale = 0
    for epoch in range(cfg.max_epochs):
        with ag.GradientTape() as tape:
            p = clf.watch(tape)
            loss = ag.softmax_cross_entropy(mlp_forward(A, p), y)
        new, state = optimizer_step(clf.arrays(), tape.gradient(loss, p.arrays()), state, cfg.lr)
        clf = clf.with_arrays(new)
        val_logits = mlp_forward(Av, clf).value
        f1 = macro_f1(val_logits.argmax(axis=1), yv, C)
        val_loss = float(ag.softmax_cross_entropy(val_logits, yv).value)
        history.append((float(loss.value), f1))
        if f1 > best[2] or (f1 == best[2] and val_loss < best[3]):
            best = (clf, epoch, f1, val_loss)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return PredictorResult(best[0], best[1], best[2], history)


def predict_from_activations(act, clf: MlpClassifierParams) -> tuple[np.ndarray, np.ndarray]:
    """Predicted classes and probability rows."""
    probs = softmax(mlp_forward(_values(act), clf).value)
    return probs.argmax(axis=-1), probs


def predict(graph: TextAttributedGraph, node: int, encoder: GcnEncoderParams, concepts: ConceptSet,
            table: EmbeddingTable, clf: MlpClassifierParams, k: int = DEFAULT_HOPS,
            readout: str = "center") -> tuple[int, np.ndarray, np.ndarray]:
    a = activations(graph, [node], encoder, concepts, table, k, readout).values[0]
    cls, probs = predict_from_activations(a, clf)
    return int(cls), probs, a


@dataclass
class ConceptScore:
    text: str
    activation: float
    display_weight: float


@dataclass
class ExplanationReport:
    instance_id: int
    predicted_class: int
    probabilities: list[float]
    concepts: list[ConceptScore]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ExplanationReport":
        return cls(obj["instance_id"], obj["predicted_class"], list(obj["probabilities"]),
                   [ConceptScore(**c) for c in obj["concepts"]])


def display_weights(scores: np.ndarray) -> np.ndarray:
    """Min-max scaling to [0, 1]; a constant (or single) score maps to 1."""
    s = np.asarray(scores, dtype=np.float64)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.ones_like(s)
    return (s - lo) / (hi - lo)


def explain_activations(instance_id: int, act: Sequence[float], concepts: ConceptSet,
                        clf: MlpClassifierParams) -> ExplanationReport:
    a = np.asarray(act, dtype=np.float64)
    cls, probs = predict_from_activations(a, clf)
    weights = display_weights(a)
    order = np.lexsort((np.arange(a.size), -a))
    ranked = [ConceptScore(concepts[j], float(a[j]), float(weights[j])) for j in order]
    return ExplanationReport(int(instance_id), int(cls), probs.tolist(), ranked)


def explain(graph: TextAttributedGraph, node: int, encoder: GcnEncoderParams, concepts: ConceptSet,
            table: EmbeddingTable, clf: MlpClassifierParams, k: int = DEFAULT_HOPS,
            readout: str = "center") -> ExplanationReport:
    _, _, a = predict(graph, node, encoder, concepts, table, clf, k, readout)
    return explain_activations(node, a, concepts, clf)


# --- word cloud ---------------------------------------------------------------

_SVG_WIDTH = 600
_MIN_FONT, _MAX_FONT = 10.0, 40.0
_COMMENT_TAG = "tagcbm-explanation"


def wordcloud_svg(report: ExplanationReport) -> str:
    """Row-packed word cloud; font size is linear in display weight.

    The report JSON rides along in a comment so :func:`report_from_svg` can
    recover it exactly.
    """
    items = sorted(enumerate(report.concepts), key=lambda t: (-t[1].display_weight, t[0]))
    x, y, row_h = 10.0, 0.0, 0.0
    words = []
    for _, c in items:
        size = _MIN_FONT + (_MAX_FONT - _MIN_FONT) * c.display_weight
        w = 0.6 * size * len(c.text) + 12
        if x + w > _SVG_WIDTH and x > 10.0:
            x, y, row_h = 10.0, y + row_h, 0.0
        row_h = max(row_h, size * 1.3)
        words.append(f'  <text x="{x:.1f}" y="{y + size:.1f}" font-size="{size:.1f}">{html.escape(c.text)}</text>')
        x += w
    height = y + row_h + 10
    payload = json.dumps(report.to_json(), ensure_ascii=True, sort_keys=True).replace("--", "-\\u002d")
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_WIDTH}" height="{height:.1f}">',
        f"<!-- {_COMMENT_TAG} {payload} -->",
        *words,
        "</svg>",
    ]) + "\n"


def report_from_svg(svg: str) -> ExplanationReport:
    m = re.search(rf"<!-- {_COMMENT_TAG} (.*?) -->", svg, flags=re.S)
    if m is None:
        raise ValueError("SVG carries no explanation payload")
    return ExplanationReport.from_json(json.loads(m.group(1)))

"""Classification metrics computed from a confusion matrix."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


def confusion_matrix(predictions, labels, n_classes: int | None = None) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("predictions and labels must be 1-D and equally long")
    if pred.size == 0:
        raise ValueError("empty prediction list")
    if np.any(pred < 0) or np.any(true < 0):
        raise ValueError("class indices must be non-negative")
    C = int(max(pred.max(), true.max())) + 1 if n_classes is None else n_classes
    if pred.max() >= C or true.max() >= C:
        raise ValueError(f"class index outside [0, {C})")
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def _per_class(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = support + predicted
        f1 = np.where(denom > 0, 2 * tp / denom, 0.0)
    return precision, recall, f1, support


def macro_f1(predictions, labels, n_classes: int | None = None) -> float:
    """Unweighted mean of per-class F1; classes with no true or predicted members count as 0."""
    _, _, f1, _ = _per_class(confusion_matrix(predictions, labels, n_classes))
    return float(f1.mean())


def bacc(predictions, labels, n_classes: int | None = None) -> float:
    """Balanced accuracy: mean recall over classes that occur in ``labels``."""
    _, recall, _, support = _per_class(confusion_matrix(predictions, labels, n_classes))
    return float(recall[support > 0].mean())


@dataclass
class MetricReport:
    macro_f1: float
    bacc: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    setting: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def metric_report(predictions, labels, n_classes: int | None = None, setting: dict | None = None) -> MetricReport:
    cm = confusion_matrix(predictions, labels, n_classes)
    precision, recall, f1, support = _per_class(cm)
    return MetricReport(
        macro_f1=float(f1.mean()),
        bacc=float(recall[support > 0].mean()),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm.tolist(),
        setting=dict(setting or {}),
    )

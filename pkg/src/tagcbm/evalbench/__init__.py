"""Splits, metrics, the leakage probe and the synthetic planted-concept substrate."""
from ..metrics import MetricReport, bacc, confusion_matrix, macro_f1, metric_report
from .probe import ProbeReport, ProbeRow, leakage_probe
from .report import CSV_COLUMNS, summary_csv
from .splits import SplitSpec, adversarial_split, default_majority, ood_split, regular_split
from .synth import SimulatedLLM, SynthConfig, SynthDataset, synth_planted, synthetic_vocabulary, write_synthetic_fixtures

__all__ = [
    "CSV_COLUMNS",
    "MetricReport",
    "ProbeReport",
    "ProbeRow",
    "SimulatedLLM",
    "SplitSpec",
    "SynthConfig",
    "SynthDataset",
    "adversarial_split",
    "bacc",
    "confusion_matrix",
    "default_majority",
    "leakage_probe",
    "macro_f1",
    "metric_report",
    "ood_split",
    "regular_split",
    "summary_csv",
    "synth_planted",
    "synthetic_vocabulary",
    "write_synthetic_fixtures",
]
